"""Command line entry point.

Exit codes: 0 success, 1 invalid input or configuration, 2 numerical
failure (non-finite loss, failed gradient check), 3 file I/O problems.
"""

import argparse
import sys

from .tensor import ShapeError

__all__ = ["main", "build_parser"]


def _add_config_flags(sub):
    sub.add_argument("--config", default=None, help="config file to load")
    sub.add_argument("--preset", default=None,
                     help="named preset applied before the config file")
    sub.add_argument("--set", dest="overrides", action="append", default=[],
                     metavar="KEY=VALUE", help="override one config key")
    sub.add_argument("--seed", type=int, default=None, help="master seed")
    sub.add_argument("--deterministic", dest="deterministic", default=None,
                     action="store_true", help="force deterministic mode")
    sub.add_argument("--no-deterministic", dest="deterministic",
                     action="store_false")


def build_parser():
    p = argparse.ArgumentParser(
        prog="bevseg",
        description="BEV semantic segmentation from multi-camera images")
    subs = p.add_subparsers(dest="command", required=True)

    s = subs.add_parser("synth", help="generate a synthetic scene dataset")
    _add_config_flags(s)
    s.add_argument("--out", required=True, help="dataset root directory")
    s.add_argument("--count", type=int, default=None,
                   help="scene count (default: data.scenes)")
    s.add_argument("--start-seed", type=int, default=0,
                   help="seed of the first scene")

    s = subs.add_parser("train", help="train a model on a dataset")
    _add_config_flags(s)
    s.add_argument("--data", required=True, help="dataset root")
    s.add_argument("--run", required=True, help="run directory for outputs")
    s.add_argument("--resume", default=None, help="checkpoint to resume from")
    s.add_argument("--steps", type=int, default=None,
                   help="hard step cap (overrides train.max_steps)")
    s.add_argument("--quiet", action="store_true")

    s = subs.add_parser("eval", help="evaluate a checkpoint on a dataset")
    _add_config_flags(s)
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--data", required=True, help="dataset root")
    s.add_argument("--out", required=True, help="directory for reports")

    s = subs.add_parser("infer", help="predict one scene")
    _add_config_flags(s)
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--scene", required=True, help="scene directory")
    s.add_argument("--out", required=True,
                   help="output path prefix (<out>_pred.pgm)")
    s.add_argument("--overlay", action="store_true",
                   help="also write a color overlay highlighting errors")

    s = subs.add_parser("attention",
                        help="export sampling locations of one BEV query")
    _add_config_flags(s)
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--scene", required=True, help="scene directory")
    s.add_argument("--row", type=int, required=True, help="query grid row")
    s.add_argument("--col", type=int, required=True, help="query grid column")
    s.add_argument("--layer", type=int, default=-1,
                   help="decoder layer (default: last)")
    s.add_argument("--out", required=True, help="output directory")

    s = subs.add_parser("gradcheck",
                        help="finite-difference check of every operation")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--only", default=None, help="run a single named entry")
    return p


def _load_cfg(args):
    from .config import load_config
    return load_config(path=args.config, preset=args.preset,
                       overrides=args.overrides, seed=args.seed,
                       deterministic=args.deterministic)


def _cmd_synth(args):
    from .config import build_rig, build_spec
    from .synth.dataset import generate_dataset
    cfg = _load_cfg(args)
    count = cfg["data.scenes"] if args.count is None else args.count
    if count <= 0:
        raise ValueError("scene count must be positive")
    generate_dataset(args.out, count, build_spec(cfg), build_rig(cfg),
                     start_seed=args.start_seed,
                     mirror_pairs=cfg["data.mirror_pairs"],
                     supersample=cfg["data.supersample"])
    print(f"wrote {count} scenes under {args.out}")
    return 0


def _cmd_train(args):
    from .train import train_run
    cfg = _load_cfg(args)
    if args.steps is not None:
        cfg["train.max_steps"] = args.steps
    log = (lambda *_: None) if args.quiet else print
    out = train_run(cfg, args.data, args.run, resume=args.resume, log=log)
    print(f"trained {out['steps']} steps, final loss {out['last_loss']:.4f}, "
          f"best merged IoU {out['best_iou']:.4f}")
    return 0


def _cmd_eval(args):
    from .inference import run_eval
    cfg = _load_cfg(args)
    report = run_eval(cfg, args.checkpoint, args.data, args.out)
    for key in sorted(report):
        val = report[key]
        print(f"{key} = {val:.6f}" if isinstance(val, float)
              else f"{key} = {val}")
    return 0


def _cmd_infer(args):
    from .inference import run_infer
    cfg = _load_cfg(args)
    _, written = run_infer(cfg, args.checkpoint, args.scene, args.out,
                           overlay=args.overlay)
    for path in written:
        print(f"wrote {path}")
    return 0


def _cmd_attention(args):
    from .inference import run_attention
    cfg = _load_cfg(args)
    rows, mass = run_attention(cfg, args.checkpoint, args.scene,
                               args.row, args.col, args.out,
                               layer=args.layer)
    print(f"exported {len(rows)} sampling tuples for query "
          f"({args.row}, {args.col})")
    for ci, frac in enumerate(mass):
        print(f"camera{ci} mass {frac:.4f}")
    return 0


def _cmd_gradcheck(args):
    from .gradsuite import SUITE, run_all, run_one
    if args.only is not None:
        names = [name for name, _, _ in SUITE]
        if args.only not in names:
            raise ValueError(f"unknown entry {args.only!r}")
        worst, limit = run_one(args.only, seed=args.seed)
        ok = worst <= limit
        print(f"{args.only:24s} {worst:.3e} limit {limit:.0e} "
              f"{'pass' if ok else 'FAIL'}")
        return 0 if ok else 2
    failed = 0
    for name, worst, limit, passed in run_all(seed=args.seed):
        print(f"{name:24s} {worst:.3e} limit {limit:.0e} "
              f"{'pass' if passed else 'FAIL'}")
        failed += 0 if passed else 1
    if failed:
        print(f"{failed} entries failed")
        return 2
    print("all gradient checks passed")
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "infer": _cmd_infer,
    "attention": _cmd_attention,
    "gradcheck": _cmd_gradcheck,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    from .train import NumericalError
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, ShapeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (NumericalError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
