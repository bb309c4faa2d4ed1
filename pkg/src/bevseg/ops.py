"""Network-grade fused operations built on the Tensor tape.

Each function forwards with plain numpy and registers a hand-derived
backward closure; the finite-difference suite in ``gradcheck`` is the
authority that these adjoints are right.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import ShapeError, Tensor, _result

__all__ = [
    "linear",
    "conv2d",
    "layer_norm",
    "batch_norm_train",
    "dropout",
    "weighted_cross_entropy",
    "interp_matrix",
    "bilinear_resize",
]


def linear(x, weight, bias=None):
    """Affine map along the last axis; weight is [out_features, in_features]."""
    if x.data.shape[-1] != weight.data.shape[1]:
        raise ShapeError(
            f"linear: input {x.data.shape} does not match weight {weight.data.shape}")
    out = x.matmul(weight.transpose(1, 0))
    if bias is not None:
        out = out + bias
    return out


def _pair(v):
    return (int(v), int(v)) if np.isscalar(v) else (int(v[0]), int(v[1]))


def conv2d(x, weight, bias=None, stride=1, padding=0):
    """2D cross-correlation, [N,Cin,H,W] (or [Cin,H,W]) by [Cout,Cin,kh,kw]."""
    squeeze = x.data.ndim == 3
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 4 or weight.data.ndim != 4:
        raise ShapeError(
            f"conv2d: expected 4D input and kernel, got {x.data.shape} and {weight.data.shape}")
    n, cin, h, w0 = xd.shape
    cout, cin_k, kh, kw = weight.data.shape
    if cin != cin_k:
        raise ShapeError(
            f"conv2d: input channels {xd.shape} do not match kernel {weight.data.shape}")
    sh, sw = _pair(stride)
    ph, pw = _pair(padding)
    ho = (h + 2 * ph - kh) // sh + 1
    wo = (w0 + 2 * pw - kw) // sw + 1
    if ho <= 0 or wo <= 0:
        raise ShapeError(
            f"conv2d: non-positive output dims {ho}x{wo} for input {x.data.shape}, "
            f"kernel {weight.data.shape}, stride {(sh, sw)}, padding {(ph, pw)}")

    xp = np.pad(xd, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw]
    data = np.tensordot(win, weight.data, axes=([1, 4, 5], [1, 2, 3]))
    data = np.ascontiguousarray(np.moveaxis(data, 3, 1))
    if bias is not None:
        data = data + bias.data[:, None, None]

    prev = (x, weight) if bias is None else (x, weight, bias)
    out = _result(data[0] if squeeze else data, prev, "conv2d")
    if out.requires_grad:

        def _bwd():
            g = out.grad[None] if squeeze else out.grad
            if bias is not None and bias.requires_grad:
                bias._accum(g.sum(axis=(0, 2, 3)))
            if weight.requires_grad:
                wview = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw]
                weight._accum(np.tensordot(g, wview, axes=([0, 2, 3], [0, 2, 3])))
            if x.requires_grad:
                pre = np.moveaxis(np.tensordot(g, weight.data, axes=([1], [0])), 3, 1)
                gxp = np.zeros_like(xp)
                for i in range(kh):
                    for j in range(kw):
                        gxp[:, :, i:i + sh * ho:sh, j:j + sw * wo:sw] += pre[..., i, j]
                gx = np.ascontiguousarray(gxp[:, :, ph:ph + h, pw:pw + w0])
                x._accum(gx[0] if squeeze else gx)

        out._backward = _bwd
    return out


def layer_norm(x, gamma, beta, eps=1e-5):
    """Normalize the last axis to zero mean, unit variance, then affine."""
    d = x.data.shape[-1]
    if gamma.data.shape != (d,) or beta.data.shape != (d,):
        raise ShapeError(
            f"layer_norm: affine shapes {gamma.data.shape}/{beta.data.shape} "
            f"do not match feature dim {d}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    data = xhat * gamma.data + beta.data
    out = _result(data, (x, gamma, beta), "layer_norm")
    if out.requires_grad:

        def _bwd():
            g = out.grad
            if gamma.requires_grad:
                gamma._accum((g * xhat).reshape(-1, d).sum(axis=0))
            if beta.requires_grad:
                beta._accum(g.reshape(-1, d).sum(axis=0))
            if x.requires_grad:
                dxhat = g * gamma.data
                term = dxhat - dxhat.mean(axis=-1, keepdims=True) \
                    - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
                x._accum(inv * term)

        out._backward = _bwd
    return out


def batch_norm_train(x, gamma, beta, eps=1e-5):
    """Training-mode batch norm over (N,H,W) per channel.

    Returns (out, batch_mean, batch_var); the statistics are plain
    arrays (biased variance) for the caller's running-average update.
    """
    if x.data.ndim != 4:
        raise ShapeError(f"batch_norm: expected [N,C,H,W], got {x.data.shape}")
    axes = (0, 2, 3)
    n = x.data.shape[0] * x.data.shape[2] * x.data.shape[3]
    mu = x.data.mean(axis=axes, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=axes, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    gm = gamma.data[None, :, None, None]
    data = xhat * gm + beta.data[None, :, None, None]
    out = _result(data, (x, gamma, beta), "batch_norm")
    if out.requires_grad:

        def _bwd():
            g = out.grad
            if gamma.requires_grad:
                gamma._accum((g * xhat).sum(axis=axes))
            if beta.requires_grad:
                beta._accum(g.sum(axis=axes))
            if x.requires_grad:
                dxhat = g * gm
                term = dxhat - dxhat.mean(axis=axes, keepdims=True) \
                    - xhat * (dxhat * xhat).mean(axis=axes, keepdims=True)
                x._accum(inv * term)

        out._backward = _bwd
    return out, mu.reshape(-1), var.reshape(-1)


def dropout(x, rate, rng, training=True):
    """Inverted dropout: surviving entries scaled by 1/(1-rate); identity in eval."""
    rate = float(rate)
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    keep = (rng.random(x.data.shape) >= rate)
    scale = keep.astype(x.data.dtype) / np.asarray(1.0 - rate, dtype=x.data.dtype)
    out = _result(x.data * scale, (x,), "dropout")
    if out.requires_grad:

        def _bwd():
            x._accum(out.grad * scale)

        out._backward = _bwd
    return out


def weighted_cross_entropy(logits, target, weights):
    """Class-weighted CE over a [C, ...] logit tensor.

    loss = sum_p w[t_p] * (-log softmax(logits)_p[t_p]) / sum_p w[t_p]
    """
    c = logits.data.shape[0]
    target = np.asarray(target)
    if target.shape != logits.data.shape[1:]:
        raise ShapeError(
            f"cross entropy: target {target.shape} does not match logits {logits.data.shape}")
    if not np.issubdtype(target.dtype, np.integer):
        raise ValueError("cross entropy: target must be an integer raster")
    if target.size and (target.min() < 0 or target.max() >= c):
        raise ValueError(
            f"cross entropy: target ids outside [0, {c}) "
            f"(found {int(target.min())}..{int(target.max())})")
    weights = np.asarray(weights, dtype=logits.data.dtype)
    if weights.shape != (c,):
        raise ShapeError(f"cross entropy: weights {weights.shape} for {c} classes")
    if np.any(weights <= 0):
        raise ValueError("cross entropy: class weights must be positive")

    lf = logits.data.reshape(c, -1)
    t = target.reshape(-1)
    p = lf.shape[1]
    m = lf.max(axis=0)
    e = np.exp(lf - m)
    lse = m + np.log(e.sum(axis=0))
    s = e / e.sum(axis=0)
    wpix = weights[t]
    wsum = wpix.sum()
    logp_t = lf[t, np.arange(p)] - lse
    loss = -(wpix * logp_t).sum() / wsum
    out = _result(np.asarray(loss, dtype=logits.data.dtype), (logits,), "cross_entropy")
    if out.requires_grad:

        def _bwd():
            gl = s * wpix
            gl[t, np.arange(p)] -= wpix
            logits._accum((out.grad / wsum) * gl.reshape(logits.data.shape))

        out._backward = _bwd
    return out


def interp_matrix(n_out, n_in, align_corners=True, dtype=np.float64):
    """Row-stochastic 1D linear-interpolation matrix [n_out, n_in]."""
    r = np.zeros((n_out, n_in), dtype=dtype)
    for i in range(n_out):
        if align_corners:
            src = 0.0 if n_out == 1 else i * (n_in - 1) / (n_out - 1)
        else:
            src = min(max((i + 0.5) * n_in / n_out - 0.5, 0.0), n_in - 1.0)
        i0 = int(np.floor(src))
        i1 = min(i0 + 1, n_in - 1)
        f = src - i0
        r[i, i0] += 1.0 - f
        r[i, i1] += f
    return r


def bilinear_resize(x, out_hw, align_corners=True):
    """Separable bilinear resize of the last two axes."""
    ho, wo = int(out_hw[0]), int(out_hw[1])
    h, w = x.data.shape[-2], x.data.shape[-1]
    dt = x.data.dtype
    ry = Tensor(interp_matrix(ho, h, align_corners).astype(dt))
    rxt = Tensor(interp_matrix(wo, w, align_corners).astype(dt).T)
    return ry.matmul(x).matmul(rxt)
