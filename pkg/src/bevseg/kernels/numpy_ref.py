"""Pure-numpy reference implementations of the sampling kernels.

These mirror the compiled kernels in ``_core.pyx`` exactly and act as the
fallback backend when the extension is unavailable.  Convention throughout:
``xy[..., 0]`` is the x (column) coordinate, ``xy[..., 1]`` the y (row)
coordinate, both in pixel units of the sampled map.  A sample's four
surrounding cells contribute bilinear weights; cells outside the map
contribute zero, so points far outside the support produce a zero value
and a zero coordinate gradient.
"""

import numpy as np

BACKEND = "numpy"

# Corner enumeration shared by forward and backward: (dy, dx) offsets and the
# sign of d(weight)/d(coordinate) for each axis.
_CORNERS = ((0, 0), (0, 1), (1, 0), (1, 1))


def _corner_terms(x, y, H, W):
    """Yield (idx, valid, wx, wy, sx, sy) for the four bilinear corners."""
    x = np.clip(np.nan_to_num(x, nan=-1e9, posinf=1e9, neginf=-1e9), -1e9, 1e9)
    y = np.clip(np.nan_to_num(y, nan=-1e9, posinf=1e9, neginf=-1e9), -1e9, 1e9)
    x0 = np.floor(x)
    y0 = np.floor(y)
    fx = (x - x0).astype(x.dtype)
    fy = (y - y0).astype(y.dtype)
    ix0 = x0.astype(np.int64)
    iy0 = y0.astype(np.int64)
    for dy, dx in _CORNERS:
        ix = ix0 + dx
        iy = iy0 + dy
        valid = (ix >= 0) & (ix < W) & (iy >= 0) & (iy < H)
        wx = fx if dx else 1.0 - fx
        wy = fy if dy else 1.0 - fy
        sx = 1.0 if dx else -1.0
        sy = 1.0 if dy else -1.0
        idx = np.where(valid, iy * W + ix, 0)
        yield idx, valid, wx.astype(x.dtype), wy.astype(y.dtype), sx, sy


def gather_bilinear(feat, xy):
    """Sample ``feat`` [C,H,W] at ``xy`` [P,2] -> [P,C]."""
    assert feat.dtype == xy.dtype, (feat.dtype, xy.dtype)
    C, H, W = feat.shape
    featf = feat.reshape(C, H * W)
    out = np.zeros((xy.shape[0], C), dtype=feat.dtype)
    for idx, valid, wx, wy, _, _ in _corner_terms(xy[:, 0], xy[:, 1], H, W):
        w = np.where(valid, wx * wy, 0.0).astype(feat.dtype)
        out += w[:, None] * featf[:, idx].T
    return out


def gather_bilinear_backward(feat, xy, grad_out):
    """Adjoints of gather_bilinear: returns (grad_feat [C,H,W], grad_xy [P,2])."""
    C, H, W = feat.shape
    P = xy.shape[0]
    featf = feat.reshape(C, H * W)
    gfeat = np.zeros((H * W, C), dtype=feat.dtype)
    gxy = np.zeros((P, 2), dtype=feat.dtype)
    for idx, valid, wx, wy, sx, sy in _corner_terms(xy[:, 0], xy[:, 1], H, W):
        corner_val = featf[:, idx].T  # [P, C]
        dot = np.einsum("pc,pc->p", grad_out, corner_val)
        gxy[:, 0] += np.where(valid, sx * wy, 0.0) * dot
        gxy[:, 1] += np.where(valid, sy * wx, 0.0) * dot
        w = np.where(valid, wx * wy, 0.0)
        contrib = w[:, None] * grad_out
        np.add.at(gfeat, idx[valid], contrib[valid])
    return gfeat.T.reshape(C, H, W).copy(), gxy


def deform_agg(value, loc, weight):
    """Weighted multi-point bilinear aggregation.

    value  [M, Cv, H, W]   per-head value map
    loc    [P, M, K, 2]    pixel-space sampling locations
    weight [P, M, K]       per-sample scalar weights
    returns [P, M, Cv]     sum_k weight * bilinear(value, loc)
    """
    assert value.dtype == loc.dtype == weight.dtype
    M, Cv, H, W = value.shape
    P, _, K, _ = loc.shape
    vflat = np.ascontiguousarray(value.reshape(M, Cv, H * W).transpose(0, 2, 1))
    out = np.zeros((P, M, Cv), dtype=value.dtype)
    for idx, valid, wx, wy, _, _ in _corner_terms(loc[..., 0], loc[..., 1], H, W):
        cw = np.where(valid, wx * wy, 0.0) * weight  # [P,M,K]
        idx_m = idx.transpose(1, 0, 2).reshape(M, P * K)
        sampled = np.take_along_axis(vflat, idx_m[:, :, None], axis=1)
        sampled = sampled.reshape(M, P, K, Cv).transpose(1, 0, 2, 3)
        out += np.einsum("pmk,pmkc->pmc", cw, sampled)
    return out


def deform_agg_backward(value, loc, weight, grad_out):
    """Adjoints of deform_agg: (grad_value, grad_loc, grad_weight)."""
    M, Cv, H, W = value.shape
    P, _, K, _ = loc.shape
    vflat = np.ascontiguousarray(value.reshape(M, Cv, H * W).transpose(0, 2, 1))
    gvalue = np.zeros((M, H * W, Cv), dtype=value.dtype)
    gloc = np.zeros_like(loc)
    gweight = np.zeros_like(weight)
    m_ix = np.broadcast_to(np.arange(M)[None, :, None], (P, M, K))
    for idx, valid, wx, wy, sx, sy in _corner_terms(loc[..., 0], loc[..., 1], H, W):
        idx_m = idx.transpose(1, 0, 2).reshape(M, P * K)
        sampled = np.take_along_axis(vflat, idx_m[:, :, None], axis=1)
        sampled = sampled.reshape(M, P, K, Cv).transpose(1, 0, 2, 3)
        dot = np.einsum("pmc,pmkc->pmk", grad_out, sampled)
        w_corner = np.where(valid, wx * wy, 0.0)
        gweight += w_corner * dot
        gloc[..., 0] += np.where(valid, sx * wy, 0.0) * weight * dot
        gloc[..., 1] += np.where(valid, sy * wx, 0.0) * weight * dot
        contrib = (w_corner * weight)[..., None] * grad_out[:, :, None, :]
        np.add.at(gvalue, (m_ix[valid], idx[valid]), contrib[valid])
    gvalue = gvalue.transpose(0, 2, 1).reshape(M, Cv, H, W).copy()
    return gvalue, gloc, gweight
