"""Evaluation, single-scene inference, and attention introspection."""

import os

import numpy as np

from .checkpoint import load_model
from .config import build_model
from .metrics import IoUAccumulator, write_report_kv, write_report_table
from .synth.dataset import load_sample, write_pgm
from .synth.raster import CLASS_NAMES
from .tensor import Tensor, no_grad
from .train import load_dataset

__all__ = ["load_trained", "run_eval", "run_infer", "run_attention",
           "CLASS_PALETTE"]

# fixed colors for the overlay image, indexed by class id
CLASS_PALETTE = np.array(
    [[40, 40, 40], [255, 170, 0], [220, 50, 50], [0, 200, 200]],
    dtype=np.uint8)


def load_trained(cfg, ckpt_path):
    model = build_model(cfg)
    load_model(ckpt_path, model)
    model.eval()
    return model


def run_eval(cfg, ckpt_path, data_root, out_dir):
    model = load_trained(cfg, ckpt_path)
    samples, names = load_dataset(data_root)
    num_classes = cfg["model.classes"]
    acc = IoUAccumulator(num_classes, CLASS_NAMES[:num_classes])
    per_scene = []
    with no_grad():
        for (images, gt), name in zip(samples, names):
            logits, _ = model(Tensor(images))
            pred = np.argmax(logits.data, axis=0)
            one = IoUAccumulator(num_classes, CLASS_NAMES[:num_classes])
            one.update(pred, gt)
            per_scene.append((name, one.report()["iou_all_merged"]))
            acc.merge(one)
    report = acc.report()
    os.makedirs(out_dir, exist_ok=True)
    write_report_kv(os.path.join(out_dir, "metrics.txt"), report)
    write_report_table(os.path.join(out_dir, "metrics_table.txt"), acc)
    with open(os.path.join(out_dir, "per_scene.txt"), "w") as fh:
        for name, iou in per_scene:
            fh.write(f"{name} {iou:.6f}\n")
    return report


def _write_ppm(path, rgb):
    h, w, _ = rgb.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(rgb, dtype=np.uint8).tobytes())


def run_infer(cfg, ckpt_path, scene_dir, out_prefix, overlay=False):
    model = load_trained(cfg, ckpt_path)
    images, gt = load_sample(scene_dir)
    with no_grad():
        logits, _ = model(Tensor(images))
    pred = np.argmax(logits.data, axis=0).astype(np.uint8)
    pred_path = out_prefix + "_pred.pgm"
    write_pgm(pred_path, pred)
    written = [pred_path]
    if overlay:
        rgb = CLASS_PALETTE[pred % len(CLASS_PALETTE)]
        wrong = pred.astype(np.int64) != gt
        rgb = rgb.copy()
        rgb[wrong] = (0.5 * rgb[wrong] + np.array([127, 0, 127])).astype(np.uint8)
        over_path = out_prefix + "_overlay.ppm"
        _write_ppm(over_path, rgb)
        written.append(over_path)
    return pred, written


def _splat_heatmap(shape_hw, xy, w):
    """Bilinearly deposit weights w at pixel coords xy onto an H x W grid."""
    h, ww = shape_hw
    grid = np.zeros((h, ww), dtype=np.float64)
    x = xy[:, 0]
    y = xy[:, 1]
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    for dy in (0, 1):
        for dx in (0, 1):
            xi = x0 + dx
            yi = y0 + dy
            frac = ((1 - np.abs(x - xi)) * (1 - np.abs(y - yi)))
            ok = (xi >= 0) & (xi < ww) & (yi >= 0) & (yi < h) & (frac > 0)
            np.add.at(grid, (yi[ok], xi[ok]), w[ok] * frac[ok])
    return grid


def run_attention(cfg, ckpt_path, scene_dir, row, col, out_dir, layer=-1):
    """Export the sampling tuples of one BEV query as a table and heatmaps.

    Returns (rows, per_camera_mass) where rows is the list of
    (camera, head, point, x, y, weight) tuples written to the CSV.
    """
    if cfg["model.decoder_kind"] != "deformable":
        raise ValueError("attention export requires decoder_kind = deformable")
    model = load_trained(cfg, ckpt_path)
    hq, wq = cfg["model.query_rows"], cfg["model.query_cols"]
    if not (0 <= row < hq and 0 <= col < wq):
        raise ValueError(f"query ({row}, {col}) outside {hq} x {wq} grid")
    n_layers = cfg["model.dec_layers"]
    if not (-n_layers <= layer < n_layers):
        raise ValueError(f"layer {layer} outside {n_layers}-layer decoder")

    images, _ = load_sample(scene_dir)
    with no_grad():
        _, captures = model(Tensor(images), capture=True)
    cap = captures[layer]
    q = row * wq + col
    loc = cap["loc"][q]       # [M, N_c, K, 2] pixel coords on the feature map
    weight = cap["weight"][q]  # [M, N_c, K]
    head_sums = weight.sum(axis=(1, 2), dtype=np.float64)
    if np.abs(head_sums - 1.0).max() > 1e-6:
        raise ValueError(
            f"per-head attention weights sum to {head_sums}, expected 1")
    total = float(weight.sum(dtype=np.float64))

    m, n_c, k = weight.shape
    feat_h = images.shape[2] // 32
    feat_w = images.shape[3] // 32
    os.makedirs(out_dir, exist_ok=True)
    rows = []
    csv_path = os.path.join(out_dir, f"attention_q{row}_{col}.csv")
    with open(csv_path, "w") as fh:
        fh.write("camera,head,point,x,y,weight\n")
        for ci in range(n_c):
            for hi in range(m):
                for ki in range(k):
                    x, y = loc[hi, ci, ki]
                    a = weight[hi, ci, ki]
                    rows.append((ci, hi, ki, float(x), float(y), float(a)))
                    fh.write(f"{ci},{hi},{ki},{x:.6f},{y:.6f},{a:.6f}\n")

    mass = weight.sum(axis=(0, 2)) / total
    for ci in range(n_c):
        grid = _splat_heatmap((feat_h, feat_w),
                              loc[:, ci].reshape(-1, 2),
                              weight[:, ci].reshape(-1))
        top = grid.max()
        img = np.zeros((feat_h, feat_w), dtype=np.uint8) if top <= 0 else \
            np.rint(grid / top * 255.0).astype(np.uint8)
        # nearest-neighbor upscale so the heatmap is viewable
        img = np.repeat(np.repeat(img, 16, axis=0), 16, axis=1)
        write_pgm(os.path.join(out_dir, f"attention_q{row}_{col}_cam{ci}.pgm"),
                  img)
    with open(os.path.join(out_dir, f"attention_q{row}_{col}_mass.txt"),
              "w") as fh:
        for ci in range(n_c):
            fh.write(f"camera{ci} {mass[ci]:.6f}\n")
    return rows, mass
