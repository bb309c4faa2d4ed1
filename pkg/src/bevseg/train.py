"""Training loop: overfit-friendly, deterministic, resumable.

Every stochastic choice is drawn from a stateless stream keyed by
(seed, purpose, step/epoch), so a resumed run consumes exactly the
random numbers the uninterrupted run would have: data order uses
stream 2 per epoch, dropout stream 3 per step, augmentation stream 4
per step (scene generation owns stream 1).
"""

import os

import numpy as np

from . import ops
from .checkpoint import load_model, save_model
from .config import build_model, write_config
from .metrics import IoUAccumulator
from .optim import AdamW
from .synth.dataset import list_scenes, load_sample
from .synth.raster import CLASS_NAMES
from .tensor import Tensor, no_grad

__all__ = ["NumericalError", "train_run", "evaluate", "load_dataset"]

DATA_STREAM = 2
DROPOUT_STREAM = 3
AUGMENT_STREAM = 4


class NumericalError(RuntimeError):
    """Loss or gradients went non-finite."""


def load_dataset(root):
    names = list_scenes(root)
    if not names:
        raise FileNotFoundError(f"no scenes under {root}")
    return [load_sample(os.path.join(root, "scenes", n)) for n in names], names


def param_groups(model, cfg):
    backbone, rest = [], []
    for name, p in model.named_parameters():
        (backbone if name.startswith("backbone.") else rest).append(p)
    return [
        {"params": backbone, "lr": cfg["train.lr_backbone"],
         "weight_decay": cfg["train.weight_decay"]},
        {"params": rest, "lr": cfg["train.lr_transformer"],
         "weight_decay": cfg["train.weight_decay"]},
    ]


def _set_lrs(opt, cfg, epoch):
    factor = cfg["train.lr_drop_factor"] if epoch >= cfg["train.lr_drop_epoch"] else 1.0
    opt.groups[0]["lr"] = cfg["train.lr_backbone"] * factor
    opt.groups[1]["lr"] = cfg["train.lr_transformer"] * factor


def augment_sample(images, gt, cfg, rng):
    """Image-space jitter; the lateral flip also flips the GT columns."""
    images = images.copy()
    if cfg["train.aug_flip"] and rng.random() < 0.5:
        images = images[:, :, :, ::-1].copy()
        gt = gt[:, ::-1].copy()
        if cfg["data.rig"] == "surround" and images.shape[0] > 1:
            # mirrored world: camera ring order reverses around the ego
            images = np.concatenate([images[:1], images[:0:-1]], axis=0).copy()
    b = cfg["train.aug_brightness"]
    if b:
        images += rng.uniform(-b, b) * images.std()
    c = cfg["train.aug_contrast"]
    if c:
        mean = images.mean(axis=(2, 3), keepdims=True)
        images = (images - mean) * (1.0 + rng.uniform(-c, c)) + mean
    h = cfg["train.aug_hue"]
    if h:
        mix = np.eye(3) + rng.uniform(-h, h, (3, 3))
        images = np.einsum("ij,njhw->nihw", mix, images)
    if cfg["train.aug_swap_channels"]:
        images = images[:, rng.permutation(3)]
    return np.ascontiguousarray(images, dtype=np.float32), gt


def evaluate(model, samples, num_classes):
    was_training = model.training
    model.eval()
    acc = IoUAccumulator(num_classes, CLASS_NAMES[:num_classes])
    with no_grad():
        for images, gt in samples:
            logits, _ = model(Tensor(images))
            acc.update(np.argmax(logits.data, axis=0), gt)
    if was_training:
        model.train()
    return acc


def _append(path, line):
    with open(path, "a") as fh:
        fh.write(line + "\n")


def train_run(cfg, data_root, run_dir, resume=None, log=print):
    os.makedirs(run_dir, exist_ok=True)
    write_config(os.path.join(run_dir, "config.txt"), cfg)
    samples, _ = load_dataset(data_root)
    n = len(samples)
    seed = cfg["seed"]
    weights = np.asarray(cfg["loss.weights"], dtype=np.float32)

    model = build_model(cfg)
    opt = AdamW(param_groups(model, cfg))
    start_step = 0
    if resume is not None:
        extra = load_model(resume, model, opt)
        start_step = int(extra["train/step"][0])
    model.train()

    total = cfg["train.epochs"] * n
    if cfg["train.max_steps"] > 0:
        total = min(total, cfg["train.max_steps"])
    loss_log = os.path.join(run_dir, "loss.log")
    metric_log = os.path.join(run_dir, "metrics.log")
    best_iou = -1.0
    perm, perm_epoch = None, -1
    last_loss = float("nan")

    for step in range(start_step + 1, total + 1):
        epoch = (step - 1) // n
        if epoch != perm_epoch:
            order_rng = np.random.default_rng([seed, DATA_STREAM, epoch])
            perm = order_rng.permutation(n)
            perm_epoch = epoch
        _set_lrs(opt, cfg, epoch)
        images, gt = samples[perm[(step - 1) % n]]
        if cfg["train.augment"]:
            aug_rng = np.random.default_rng([seed, AUGMENT_STREAM, step])
            images, gt = augment_sample(images, gt, cfg, aug_rng)
        model.reseed_dropout([seed, DROPOUT_STREAM, step])

        logits, _ = model(Tensor(images))
        loss = ops.weighted_cross_entropy(logits, gt, weights)
        loss_val = float(loss.item())
        if not np.isfinite(loss_val):
            diag = os.path.join(run_dir, "nan_diagnostic.txt")
            with open(diag, "w") as fh:
                fh.write(f"non-finite loss {loss_val} at step {step} "
                         f"epoch {epoch}\n")
            raise NumericalError(f"loss is {loss_val} at step {step} "
                                 f"(diagnostic: {diag})")
        model.zero_grad()
        loss.backward()
        opt.step()
        last_loss = loss_val

        if step == 1 or step == total or step % cfg["train.log_every"] == 0:
            _append(loss_log, f"{epoch} {step} {loss_val:.6f}")
            if log is not None and (step == 1 or step % (cfg["train.log_every"] * 10) == 0):
                log(f"step {step}/{total} epoch {epoch} loss {loss_val:.4f}")

        epoch_done = step % n == 0 or step == total
        if epoch_done:
            finished = epoch + 1
            if finished % cfg["train.checkpoint_every"] == 0 or step == total:
                _save(os.path.join(run_dir, f"ckpt_epoch{finished}.bevt"),
                      model, opt, step)
            if finished % cfg["train.eval_every"] == 0 or step == total:
                acc = evaluate(model, samples, cfg["model.classes"])
                rep = acc.report()
                row = " ".join(f"{rep[f'iou_{name}']:.6f}"
                               for name in acc.class_names)
                _append(metric_log,
                        f"{epoch} {step} {row} {rep['iou_all_mean']:.6f} "
                        f"{rep['iou_all_merged']:.6f}")
                if rep["iou_all_merged"] > best_iou:
                    best_iou = rep["iou_all_merged"]
                    _save(os.path.join(run_dir, "best.bevt"), model, opt, step)

    _save(os.path.join(run_dir, "final.bevt"), model, opt, total)
    return {"steps": total, "last_loss": last_loss, "best_iou": best_iou,
            "model": model}


def _save(path, model, opt, step):
    save_model(path, model, opt,
               extra={"train/step": np.array([float(step)])})
