"""Segmentation IoU metrics and report formatting.

Dataset-level metrics accumulate a confusion matrix across samples and
divide once at the end (accumulate-then-divide); per-sample averaging
is just one accumulator per sample.  Empty-mask convention: IoU is 1
when both masks are empty, 0 when exactly one is.
"""

import numpy as np

from .tensor import ShapeError

__all__ = ["IoUAccumulator", "iou", "miou", "rasterize_prediction",
           "write_report_kv", "write_report_table"]


def rasterize_prediction(logits):
    """[C, H, W] logits -> [H, W] int64 class raster; ties go to the
    lower class id."""
    data = logits.data if hasattr(logits, "data") else np.asarray(logits)
    return np.argmax(data, axis=0).astype(np.int64)


def _binary_iou(inter, a_count, b_count):
    union = a_count + b_count - inter
    if union == 0:
        return 1.0
    return float(inter) / float(union)


def iou(pred, gt, class_id):
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ShapeError(f"raster shapes differ: {pred.shape} vs {gt.shape}")
    p = pred == class_id
    g = gt == class_id
    return _binary_iou(int((p & g).sum()), int(p.sum()), int(g.sum()))


class IoUAccumulator:
    """Confusion-count accumulator over [H, W] class rasters."""

    def __init__(self, num_classes, class_names=None):
        if class_names is not None and len(class_names) != num_classes:
            raise ValueError("one name per class required")
        self.num_classes = num_classes
        self.class_names = list(class_names) if class_names is not None \
            else [f"class{i}" for i in range(num_classes)]
        self.confusion = np.zeros((num_classes, num_classes), dtype=np.int64)

    def update(self, pred, gt):
        pred = np.asarray(pred).reshape(-1)
        gt = np.asarray(gt).reshape(-1)
        if pred.shape != gt.shape:
            raise ShapeError(f"raster sizes differ: {pred.size} vs {gt.size}")
        if pred.size == 0:
            return
        n = self.num_classes
        if gt.min() < 0 or gt.max() >= n or pred.min() < 0 or pred.max() >= n:
            raise ValueError(f"class ids out of range [0, {n})")
        flat = gt.astype(np.int64) * n + pred.astype(np.int64)
        self.confusion += np.bincount(flat, minlength=n * n).reshape(n, n)

    def merge(self, other):
        if other.num_classes != self.num_classes:
            raise ValueError("class count mismatch")
        self.confusion += other.confusion
        return self

    def counts(self, class_id):
        """(intersection, union) pixel counts for one class."""
        conf = self.confusion
        inter = int(conf[class_id, class_id])
        union = int(conf[class_id].sum() + conf[:, class_id].sum()) - inter
        return inter, union

    def iou(self, class_id):
        inter, union = self.counts(class_id)
        return 1.0 if union == 0 else inter / union

    def miou(self, class_ids):
        ids = list(class_ids)
        if not ids:
            raise ValueError("miou needs at least one class")
        return float(np.mean([self.iou(c) for c in ids]))

    def merged_iou(self, class_ids):
        """IoU of the single mask formed by the union of the listed
        classes (pixels of any listed class count as one class)."""
        ids = np.asarray(list(class_ids))
        if ids.size == 0:
            raise ValueError("merged_iou needs at least one class")
        conf = self.confusion
        inter = int(conf[np.ix_(ids, ids)].sum())
        g_count = int(conf[ids].sum())
        p_count = int(conf[:, ids].sum())
        return _binary_iou(inter, p_count, g_count)

    def report(self, structure_ids=None):
        """Flat metrics dict; structure_ids default to every class but 0."""
        if structure_ids is None:
            structure_ids = list(range(1, self.num_classes))
        out = {}
        for c in range(self.num_classes):
            out[f"iou_{self.class_names[c]}"] = self.iou(c)
        out["miou"] = self.miou(range(self.num_classes))
        if structure_ids:
            out["iou_all_mean"] = self.miou(structure_ids)
            out["iou_all_merged"] = self.merged_iou(structure_ids)
        out["pixels"] = int(self.confusion.sum())
        return out


def miou(pred, gt, class_ids):
    hi = int(max(np.max(pred), np.max(gt), max(class_ids)))
    acc = IoUAccumulator(hi + 1)
    acc.update(pred, gt)
    return acc.miou(class_ids)


def write_report_kv(path, report):
    with open(path, "w") as fh:
        for key, val in report.items():
            if isinstance(val, float):
                fh.write(f"{key} = {val:.6f}\n")
            else:
                fh.write(f"{key} = {val}\n")


def write_report_table(path, acc):
    with open(path, "w") as fh:
        fh.write("name intersection union iou\n")
        for c in range(acc.num_classes):
            inter, union = acc.counts(c)
            fh.write(f"{acc.class_names[c]} {inter} {union} {acc.iou(c):.6f}\n")
