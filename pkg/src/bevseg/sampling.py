"""Feature maps and differentiable bilinear sampling.

Coordinates are pixel-space (x, y) with x indexing columns.  Samples
outside the map fade linearly to zero over the last cell and contribute
exactly zero (value and gradient) beyond one cell past the border.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .tensor import ShapeError, Tensor, _result

__all__ = [
    "FeatureMap",
    "rescale_to_pixels",
    "grid_sample",
    "bilinear_sample",
    "sample_points",
    "deform_aggregate",
]


@dataclass
class FeatureMap:
    """One camera-and-scale feature plane with its stride metadata."""

    values: Tensor
    stride: int
    scale: int = 0
    camera: int = 0

    def __post_init__(self):
        if self.values.data.ndim != 3:
            raise ShapeError(f"feature map must be [C,H,W], got {self.values.data.shape}")
        _, h, w = self.values.data.shape
        if h < 2 or w < 2:
            raise ShapeError(f"feature map spatial dims must be >= 2, got {h}x{w}")
        if self.stride <= 0:
            raise ValueError(f"stride must be positive, got {self.stride}")

    @property
    def shape(self):
        return self.values.data.shape


def rescale_to_pixels(p, height, width):
    """Map normalized (u, v) to pixel (x, y): 0 and 1 land on the first
    and last cell centers."""
    scale = Tensor(np.array([width - 1, height - 1], dtype=p.data.dtype))
    return p * scale


def _check_same_dtype(a, b, op):
    if a.data.dtype != b.data.dtype:
        raise TypeError(f"{op}: mixed dtypes {a.data.dtype} and {b.data.dtype}")


def grid_sample(feat, xy):
    """Sample feat [C,H,W] at xy [..., 2] pixel coords -> [..., C]."""
    if feat.data.ndim != 3:
        raise ShapeError(f"grid_sample: feature map must be [C,H,W], got {feat.data.shape}")
    if xy.data.shape[-1] != 2:
        raise ShapeError(f"grid_sample: coordinates must end in 2, got {xy.data.shape}")
    _check_same_dtype(feat, xy, "grid_sample")
    lead = xy.data.shape[:-1]
    xyf = np.ascontiguousarray(xy.data.reshape(-1, 2))
    featd = np.ascontiguousarray(feat.data)
    data = kernels.gather_bilinear(featd, xyf)
    c = feat.data.shape[0]
    out = _result(data.reshape(lead + (c,)), (feat, xy), "grid_sample")
    if out.requires_grad:

        def _bwd():
            g = np.ascontiguousarray(out.grad.reshape(-1, c))
            gfeat, gxy = kernels.gather_bilinear_backward(featd, xyf, g)
            feat._accum(gfeat)
            xy._accum(gxy.reshape(xy.data.shape))

        out._backward = _bwd
    return out


def bilinear_sample(fmap, p):
    """Sample one pixel-space point from a FeatureMap -> Tensor[C]."""
    pt = p if isinstance(p, Tensor) else Tensor(np.asarray(p, dtype=fmap.values.data.dtype))
    return grid_sample(fmap.values, pt.reshape(1, 2)).reshape(fmap.shape[0])


def sample_points(fmap, reference, offsets):
    """Sample at rescale(reference) + offsets[k] -> [K, C].

    `reference` is a normalized (u, v) pair; `offsets` are in pixel
    units of this map.
    """
    _, h, w = fmap.shape
    pix = rescale_to_pixels(reference, h, w)
    return grid_sample(fmap.values, offsets + pix)


def deform_aggregate(value, loc, weight):
    """Weighted sum of K bilinear samples per (query, head).

    value [M,Cv,H,W], loc [P,M,K,2] pixel coords, weight [P,M,K]
    -> [P,M,Cv].
    """
    if value.data.ndim != 4 or loc.data.ndim != 4 or weight.data.ndim != 3:
        raise ShapeError(
            f"deform_aggregate: bad ranks {value.data.shape}, {loc.data.shape}, "
            f"{weight.data.shape}")
    p, m, k, two = loc.data.shape
    if two != 2 or weight.data.shape != (p, m, k) or value.data.shape[0] != m:
        raise ShapeError(
            f"deform_aggregate: inconsistent shapes {value.data.shape}, "
            f"{loc.data.shape}, {weight.data.shape}")
    _check_same_dtype(value, loc, "deform_aggregate")
    _check_same_dtype(value, weight, "deform_aggregate")
    vd = np.ascontiguousarray(value.data)
    ld = np.ascontiguousarray(loc.data)
    wd = np.ascontiguousarray(weight.data)
    data = kernels.deform_agg(vd, ld, wd)
    out = _result(data, (value, loc, weight), "deform_aggregate")
    if out.requires_grad:

        def _bwd():
            g = np.ascontiguousarray(out.grad)
            gv, gl, gw = kernels.deform_agg_backward(vd, ld, wd, g)
            value._accum(gv)
            loc._accum(gl)
            weight._accum(gw)

        out._backward = _bwd
    return out
