"""Dense segmentation head over the decoded query grid.

Queries are reshaped back onto their H_q x W_q grid, pushed through two
upsample stages (3x3 conv block, 1x1 conv block, 2x bilinear), then a
dropout and a 1x1 classification conv.  Output resolution is 4x the
query grid; an optional non-learned bilinear resize matches an
arbitrary target raster afterwards.
"""

import numpy as np

from . import ops
from .nn import BatchNorm2d, Conv2d, Dropout, Module, ReLU, Sequential
from .tensor import ShapeError, Tensor

__all__ = ["SegHead", "reshape_queries"]


def reshape_queries(z, grid_hw):
    """[N_q, C] -> [C, H_q, W_q], query i on grid row i // W_q, col i % W_q."""
    hq, wq = grid_hw
    nq, c = z.data.shape
    if nq != hq * wq:
        raise ShapeError(f"cannot place {nq} queries on a {hq}x{wq} grid")
    return z.transpose(1, 0).reshape(c, hq, wq)


class UpsampleStage(Module):
    def __init__(self, in_channels, out_channels, rng):
        super().__init__()
        self.block3 = Sequential(
            Conv2d(in_channels, out_channels, 3, rng, padding=1, bias=False),
            BatchNorm2d(out_channels, track_stats=False),
            ReLU(),
        )
        self.block1 = Sequential(
            Conv2d(out_channels, out_channels, 1, rng, bias=False),
            BatchNorm2d(out_channels, track_stats=False),
            ReLU(),
        )

    def forward(self, x):
        x = self.block1(self.block3(x))
        h, w = x.data.shape[-2], x.data.shape[-1]
        return ops.bilinear_resize(x, (2 * h, 2 * w))


class SegHead(Module):
    """grid_hw: query grid; final_hw: optional output raster size applied
    after the two 2x stages (plain bilinear, no parameters)."""

    def __init__(self, dim, num_classes, grid_hw, rng, final_hw=None,
                 dropout=0.1):
        super().__init__()
        if num_classes < 2:
            raise ValueError(f"need at least 2 classes, got {num_classes}")
        self.grid_hw = (int(grid_hw[0]), int(grid_hw[1]))
        self.final_hw = None if final_hw is None else (int(final_hw[0]), int(final_hw[1]))
        mid = max(1, dim // 2)
        self.stage1 = UpsampleStage(dim, dim, rng)
        self.stage2 = UpsampleStage(dim, mid, rng)
        self.drop = Dropout(dropout)
        self.classify = Conv2d(mid, num_classes, 1, rng)

    def forward(self, z):
        """[N_q, C] query features -> [C_seg, H_out, W_out] logits."""
        x = reshape_queries(z, self.grid_hw)
        x = self.stage2(self.stage1(x.reshape((1,) + x.data.shape)))
        logits = self.classify(self.drop(x))
        if self.final_hw is not None and self.final_hw != logits.data.shape[-2:]:
            logits = ops.bilinear_resize(logits, self.final_hw)
        return logits.reshape(logits.data.shape[1:])
