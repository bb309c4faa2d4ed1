"""Shared convolutional feature extractor.

A small residual net: stride-4 stem, then three stages that halve
resolution, so the outputs sit at strides 8, 16 and 32.  All cameras
go through as one batch, which makes weight sharing across cameras a
structural fact rather than a convention.
"""

import numpy as np

from .nn import BatchNorm2d, Conv2d, Module, ModuleList, Sequential
from .tensor import ShapeError

__all__ = ["Backbone", "ResidualBlock"]


class ResidualBlock(Module):
    def __init__(self, cin, cout, rng, stride=1):
        super().__init__()
        self.conv1 = Conv2d(cin, cout, 3, rng, stride=stride, padding=1, bias=False)
        self.bn1 = BatchNorm2d(cout)
        self.conv2 = Conv2d(cout, cout, 3, rng, padding=1, bias=False)
        self.bn2 = BatchNorm2d(cout)
        if stride != 1 or cin != cout:
            self.proj = Conv2d(cin, cout, 1, rng, stride=stride, bias=False)
            self.proj_bn = BatchNorm2d(cout)
        else:
            self.proj = None

    def forward(self, x):
        y = self.bn2(self.conv2(self.bn1(self.conv1(x)).relu()))
        skip = x if self.proj is None else self.proj_bn(self.proj(x))
        return (y + skip).relu()


class Backbone(Module):
    def __init__(self, rng, widths=(32, 64, 128), stem_channels=16, blocks_per_stage=2):
        super().__init__()
        if not (widths[0] <= widths[1] <= widths[2]):
            raise ValueError(f"stage widths must be non-decreasing, got {widths}")
        self.widths = tuple(widths)
        self.stem_conv = Conv2d(3, stem_channels, 5, rng, stride=4, padding=2, bias=False)
        self.stem_bn = BatchNorm2d(stem_channels)
        stages = []
        cin = stem_channels
        for cout in widths:
            blocks = [ResidualBlock(cin, cout, rng, stride=2)]
            for _ in range(blocks_per_stage - 1):
                blocks.append(ResidualBlock(cout, cout, rng))
            stages.append(Sequential(*blocks))
            cin = cout
        self.stages = ModuleList(stages)

    def forward(self, images):
        """images [N_c, 3, H, W] -> [stride-8, stride-16, stride-32] tensors."""
        if images.data.ndim != 4 or images.data.shape[1] != 3:
            raise ShapeError(f"backbone expects [N,3,H,W], got {images.data.shape}")
        h, w = images.data.shape[2], images.data.shape[3]
        if h % 32 or w % 32:
            raise ShapeError(f"input dims must be divisible by 32, got {h}x{w}")
        x = self.stem_bn(self.stem_conv(images)).relu()
        outs = []
        for stage in self.stages:
            x = stage(x)
            outs.append(x)
        return outs
