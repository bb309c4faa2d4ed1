"""Flat key-value run configuration.

File format: one `key = value` per line, `#` comments, blank lines
ignored.  Every key is declared in SCHEMA with a type and default;
unknown keys are rejected.  Presets are named sets of overrides applied
before the config file and any --set pairs.  The fully resolved config
echoes back through write_config and re-parses identically.
"""

import numpy as np

from .synth.camera import desk_rig, front_rig, surround_rig
from .synth.raster import BEVSpec

__all__ = ["SCHEMA", "PRESETS", "load_config", "parse_file", "write_config",
           "build_model", "build_spec", "build_rig", "schema_markdown"]


def _bool(text):
    if text in ("true", "1", "yes"):
        return True
    if text in ("false", "0", "no"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _ints(text):
    return tuple(int(v) for v in text.split(",") if v.strip())


def _floats(text):
    return tuple(float(v) for v in text.split(",") if v.strip())


_PARSERS = {"int": int, "float": float, "bool": _bool, "str": str,
            "ints": _ints, "floats": _floats}


def _fmt(kind, value):
    if kind == "bool":
        return "true" if value else "false"
    if kind in ("ints", "floats"):
        return ",".join(repr(v) if kind == "floats" else str(v) for v in value)
    if kind == "float":
        return repr(float(value))
    return str(value)


# key: (type, default, help)
SCHEMA = {
    "seed": ("int", 0, "master seed for init, data order, dropout and augment"),
    "deterministic": ("bool", True, "fixed reduction order and seeded streams"),

    "data.rig": ("str", "desk", "camera rig: desk (front+rear), front, surround"),
    "data.cameras": ("int", 2, "camera count; must match the rig"),
    "data.image_height": ("int", 128, "camera image height, divisible by 32"),
    "data.image_width": ("int", 224, "camera image width, divisible by 32"),
    "data.fx": ("float", 70.0, "focal length in pixels (fy = fx)"),
    "data.cam_height": ("float", 1.5, "camera mount height in meters"),
    "data.pitch": ("float", 0.18, "downward camera pitch in radians"),
    "data.scenes": ("int", 16, "scene count for the synth command"),
    "data.mirror_pairs": ("bool", False,
                          "generate scene pairs related by a half-turn so the "
                          "symmetric rig sees swapped camera contents"),
    "data.supersample": ("int", 2, "renderer anti-aliasing factor"),

    "bev.x_min": ("float", -20.0, "BEV longitudinal extent start, meters"),
    "bev.x_max": ("float", 20.0, "BEV longitudinal extent end, meters"),
    "bev.y_min": ("float", -10.0, "BEV lateral extent start, meters"),
    "bev.y_max": ("float", 10.0, "BEV lateral extent end, meters"),
    "bev.height": ("int", 160, "GT raster rows (longitudinal)"),
    "bev.width": ("int", 80, "GT raster columns (lateral)"),
    "bev.line_width.divider": ("int", 5, "drawn divider width, GT pixels"),
    "bev.line_width.ped_crossing": ("int", 5, "drawn crossing width, GT pixels"),
    "bev.line_width.boundary": ("int", 5, "drawn boundary width, GT pixels"),

    "model.dim": ("int", 64, "transformer channel width C"),
    "model.heads": ("int", 2, "attention heads M"),
    "model.points": ("int", 4, "sampling points per head and camera K"),
    "model.ffn_dim": ("int", 128, "feed-forward hidden width"),
    "model.enc_layers": ("int", 2, "encoder layers"),
    "model.dec_layers": ("int", 2, "decoder layers"),
    "model.query_rows": ("int", 40, "BEV query grid rows H_q"),
    "model.query_cols": ("int", 20, "BEV query grid columns W_q"),
    "model.classes": ("int", 4, "segmentation classes incl. background"),
    "model.backbone_widths": ("ints", (32, 64, 128), "stage widths c3,c4,c5"),
    "model.encoder_kind": ("str", "deformable", "encoder attention: deformable or standard"),
    "model.decoder_kind": ("str", "deformable", "decoder cross-attention: deformable or standard"),
    "model.camera_embed": ("bool", False, "learnable per-camera embedding (CE)"),
    "model.query_self_attn": ("bool", True, "query self-attention sublayer in the decoder"),
    "model.cross_scale": ("bool", True, "encoder tokens attend across scales jointly"),
    "model.dropout": ("float", 0.0, "transformer dropout rate"),
    "head.dropout": ("float", 0.1, "segmentation head dropout rate"),
    "head.final_resize_to_gt": ("bool", False,
                                "bilinear-resize head output to the GT raster "
                                "when 4x query grid differs from it"),

    "loss.weights": ("floats", (1.0, 15.0, 15.0, 15.0), "per-class CE weights"),

    "train.epochs": ("int", 125, "total epochs (one epoch = one pass over scenes)"),
    "train.lr_drop_epoch": ("int", 100, "epoch at which learning rates drop"),
    "train.lr_drop_factor": ("float", 0.1, "learning-rate drop multiplier"),
    "train.lr_backbone": ("float", 2e-4,
                          "backbone learning rate (from-scratch training)"),
    "train.lr_transformer": ("float", 5e-4, "transformer/head learning rate"),
    "train.weight_decay": ("float", 1e-4, "AdamW decoupled weight decay"),
    "train.batch": ("int", 1, "samples per optimizer step"),
    "train.max_steps": ("int", 0, "stop after this many steps; 0 = run all epochs"),
    "train.checkpoint_every": ("int", 25, "checkpoint every N epochs"),
    "train.log_every": ("int", 10, "log a loss row every N steps"),
    "train.eval_every": ("int", 25, "evaluate training-set IoU every N epochs"),
    "train.augment": ("bool", False, "enable image-space augmentation"),
    "train.aug_brightness": ("float", 0.2, "brightness jitter fraction"),
    "train.aug_contrast": ("float", 0.2, "contrast jitter fraction"),
    "train.aug_hue": ("float", 0.05, "channel-mixing jitter fraction"),
    "train.aug_flip": ("bool", False, "horizontal flip paired with lateral GT flip"),
    "train.aug_swap_channels": ("bool", False, "random channel permutation"),
}

PRESETS = {
    # the desk defaults above ARE the desk preset
    "desk": {},
    "desk-mirror": {
        "data.mirror_pairs": "true",
        "model.decoder_kind": "standard",
        "model.encoder_kind": "standard",
    },
    "front": {
        "data.rig": "front",
        "data.cameras": "1",
        "bev.x_min": "0.0",
        "bev.x_max": "60.0",
        "bev.y_min": "-15.0",
        "bev.y_max": "15.0",
        "bev.height": "240",
        "bev.width": "120",
        "model.query_rows": "60",
        "model.query_cols": "30",
    },
    "surround": {
        "data.rig": "surround",
        "data.cameras": "6",
        "data.image_height": "448",
        "data.image_width": "800",
        "bev.x_min": "-30.0",
        "bev.x_max": "30.0",
        "bev.y_min": "-15.0",
        "bev.y_max": "15.0",
        "bev.height": "400",
        "bev.width": "200",
        "bev.line_width.divider": "5",
        "bev.line_width.ped_crossing": "5",
        "bev.line_width.boundary": "5",
        "model.dim": "256",
        "model.heads": "8",
        "model.points": "16",
        "model.ffn_dim": "512",
        "model.enc_layers": "4",
        "model.dec_layers": "4",
        "model.query_rows": "100",
        "model.query_cols": "50",
        "model.backbone_widths": "64,128,256",
        "train.epochs": "120",
        "train.lr_drop_epoch": "100",
        "train.lr_backbone": "1e-5",
        "train.lr_transformer": "1e-4",
    },
}


def _parse_pair(key, text):
    if key not in SCHEMA:
        raise ValueError(f"unknown config key: {key}")
    kind = SCHEMA[key][0]
    try:
        return _PARSERS[kind](text.strip())
    except ValueError as exc:
        raise ValueError(f"bad value for {key} ({kind}): {text!r}") from exc


def parse_file(path):
    pairs = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, text = (part.strip() for part in line.split("=", 1))
            if key in pairs:
                raise ValueError(f"{path}:{lineno}: duplicate key {key}")
            pairs[key] = text
    return pairs


def load_config(path=None, preset=None, overrides=(), seed=None,
                deterministic=None):
    cfg = {key: default for key, (_, default, _) in SCHEMA.items()}
    if preset is not None:
        if preset not in PRESETS:
            raise ValueError(f"unknown preset: {preset!r} "
                             f"(have {', '.join(sorted(PRESETS))})")
        for key, text in PRESETS[preset].items():
            cfg[key] = _parse_pair(key, text)
    if path is not None:
        for key, text in parse_file(path).items():
            cfg[key] = _parse_pair(key, text)
    for item in overrides:
        if isinstance(item, str):
            if "=" not in item:
                raise ValueError(f"override {item!r} is not KEY=VALUE")
            key, text = item.split("=", 1)
            key, text = key.strip(), text.strip()
        else:
            key, text = item
        cfg[key] = _parse_pair(key, text)
    if seed is not None:
        cfg["seed"] = int(seed)
    if deterministic is not None:
        cfg["deterministic"] = bool(deterministic)
    validate(cfg)
    return cfg


def validate(cfg):
    rig_sizes = {"desk": 2, "front": 1, "surround": cfg["data.cameras"]}
    rig = cfg["data.rig"]
    if rig not in rig_sizes:
        raise ValueError(f"unknown rig {rig!r}")
    if cfg["data.cameras"] != rig_sizes[rig]:
        raise ValueError(f"rig {rig!r} has {rig_sizes[rig]} cameras, "
                         f"config says {cfg['data.cameras']}")
    if cfg["data.image_height"] % 32 or cfg["data.image_width"] % 32:
        raise ValueError("image dims must be divisible by 32")
    for kind_key in ("model.encoder_kind", "model.decoder_kind"):
        if cfg[kind_key] not in ("deformable", "standard"):
            raise ValueError(f"{kind_key} must be deformable or standard")
    if len(cfg["loss.weights"]) != cfg["model.classes"]:
        raise ValueError("loss.weights length must equal model.classes")
    if cfg["model.dim"] % cfg["model.heads"]:
        raise ValueError("model.dim must be divisible by model.heads")
    if len(cfg["model.backbone_widths"]) != 3:
        raise ValueError("model.backbone_widths needs exactly 3 stage widths")
    out_h, out_w = 4 * cfg["model.query_rows"], 4 * cfg["model.query_cols"]
    if (out_h, out_w) != (cfg["bev.height"], cfg["bev.width"]) \
            and not cfg["head.final_resize_to_gt"]:
        raise ValueError(
            f"head output {out_h}x{out_w} != GT {cfg['bev.height']}x"
            f"{cfg['bev.width']}; set head.final_resize_to_gt = true")
    build_spec(cfg)  # square-cell and width checks


def write_config(path, cfg):
    with open(path, "w") as fh:
        for key in sorted(cfg):
            fh.write(f"{key} = {_fmt(SCHEMA[key][0], cfg[key])}\n")


def build_spec(cfg):
    return BEVSpec(
        x_min=cfg["bev.x_min"], x_max=cfg["bev.x_max"],
        y_min=cfg["bev.y_min"], y_max=cfg["bev.y_max"],
        height=cfg["bev.height"], width=cfg["bev.width"],
        line_widths={1: cfg["bev.line_width.divider"],
                     2: cfg["bev.line_width.ped_crossing"],
                     3: cfg["bev.line_width.boundary"]})


def build_rig(cfg):
    kw = dict(width=cfg["data.image_width"], height=cfg["data.image_height"],
              fx=cfg["data.fx"], fy=cfg["data.fx"],
              cam_height=cfg["data.cam_height"], pitch=cfg["data.pitch"])
    rig = cfg["data.rig"]
    if rig == "desk":
        return desk_rig(**kw)
    if rig == "front":
        return front_rig(**kw)
    return surround_rig(cameras=cfg["data.cameras"], **kw)


def build_model(cfg, rng=None):
    from .model import BEVSegmenter
    if rng is None:
        rng = np.random.default_rng([cfg["seed"], 0])
    final_hw = (cfg["bev.height"], cfg["bev.width"]) \
        if cfg["head.final_resize_to_gt"] else None
    return BEVSegmenter(
        rng,
        cameras=cfg["data.cameras"],
        dim=cfg["model.dim"],
        heads=cfg["model.heads"],
        points=cfg["model.points"],
        ffn_dim=cfg["model.ffn_dim"],
        enc_layers=cfg["model.enc_layers"],
        dec_layers=cfg["model.dec_layers"],
        grid_hw=(cfg["model.query_rows"], cfg["model.query_cols"]),
        num_classes=cfg["model.classes"],
        backbone_widths=cfg["model.backbone_widths"],
        final_hw=final_hw,
        decoder_kind=cfg["model.decoder_kind"],
        encoder_kind=cfg["model.encoder_kind"],
        camera_embed=cfg["model.camera_embed"],
        query_self_attn=cfg["model.query_self_attn"],
        cross_scale=cfg["model.cross_scale"],
        dropout=cfg["model.dropout"],
        head_dropout=cfg["head.dropout"])


def schema_markdown():
    """Reference table of every config key; docs/config.md mirrors this."""
    lines = [
        "# Configuration reference",
        "",
        "Config files hold one `key = value` pair per line; `#` starts a",
        "comment.  Unknown keys are rejected.  Values below are the",
        "defaults; presets and `--set key=value` flags override them.",
        "",
        "| key | type | default | meaning |",
        "| --- | --- | --- | --- |",
    ]
    for key, (kind, default, help_text) in SCHEMA.items():
        lines.append(f"| `{key}` | {kind} | `{_fmt(kind, default)}` "
                     f"| {help_text} |")
    lines += [
        "",
        "## Presets",
        "",
    ]
    for name in sorted(PRESETS):
        pairs = PRESETS[name]
        if pairs:
            body = ", ".join(f"`{k} = {v}`" for k, v in pairs.items())
        else:
            body = "defaults unchanged"
        lines.append(f"- **{name}**: {body}")
    lines.append("")
    return "\n".join(lines)
