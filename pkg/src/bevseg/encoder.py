"""Per-camera feature enhancement over flattened multi-scale tokens.

Each camera's three scale maps are projected to a common width,
flattened into one token sequence, and run through a stack of
deformable (or dense, for the ablation) self-attention layers.
Cameras share weights and never exchange information here.
"""

import numpy as np

from . import ops
from .nn import (Dropout, FFN, Linear, LayerNorm, Module, ModuleList,
                 MultiheadAttention, Conv2d, Parameter, uniform_init)
from .sampling import deform_aggregate
from .tensor import Tensor, concat, softmax

__all__ = ["Encoder", "sinusoidal_pos_2d", "radial_offset_bias"]

_POS_CACHE = {}


def sinusoidal_pos_2d(h, w, dim, dtype=np.float32):
    """Fixed 2D sine/cosine table [h*w, dim]; rows vary v first, then u,
    matching row-major flattening of an [h, w] map."""
    if dim % 4:
        raise ValueError(f"positional dim must be divisible by 4, got {dim}")
    key = (h, w, dim, np.dtype(dtype).str)
    hit = _POS_CACHE.get(key)
    if hit is not None:
        return hit

    def table(pos, d):
        # pos in [0,1]; d even
        omega = 1.0 / (10000.0 ** (np.arange(d // 2) / (d // 2)))
        ang = 2.0 * np.pi * pos[:, None] * omega[None, :]
        return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)

    ys, xs = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    v = ys.reshape(-1) / max(h - 1, 1)
    u = xs.reshape(-1) / max(w - 1, 1)
    out = np.concatenate([table(v, dim // 2), table(u, dim // 2)], axis=1).astype(dtype)
    _POS_CACHE[key] = out
    return out


def radial_offset_bias(heads, groups, points):
    """Initial sampling-offset bias: head m points along angle 2*pi*m/heads,
    point k at radius k+1, repeated for every group (scale or camera)."""
    ang = 2.0 * np.pi * np.arange(heads) / heads
    dirs = np.stack([np.cos(ang), np.sin(ang)], axis=1)  # [M, 2]
    radii = np.arange(1, points + 1, dtype=np.float64)  # [K]
    bias = dirs[:, None, None, :] * radii[None, None, :, None]  # [M,1,K,2]
    return np.broadcast_to(bias, (heads, groups, points, 2)).reshape(-1)


class DeformableEncoderLayer(Module):
    """Multi-scale deformable self-attention plus FFN, post-norm residuals."""

    def __init__(self, dim, heads, points, levels, ffn_dim, rng,
                 dropout=0.0, cross_scale=True):
        super().__init__()
        self.dim = dim
        self.heads = heads
        self.points = points
        self.levels = levels
        self.cross_scale = cross_scale
        self.off_proj = Linear(dim, heads * levels * points * 2, rng)
        self.w_proj = Linear(dim, heads * levels * points, rng)
        self.val_proj = Linear(dim, dim, rng)
        self.out_proj = Linear(dim, dim, rng)
        # zero weights + structured biases: at init every token aggregates
        # a small ring of samples around its own location, uniformly.
        self.off_proj.weight.data[:] = 0.0
        self.off_proj.bias.data[:] = radial_offset_bias(heads, levels, points)
        self.w_proj.weight.data[:] = 0.0
        self.w_proj.bias.data[:] = 0.0
        self.norm1 = LayerNorm(dim)
        self.norm2 = LayerNorm(dim)
        self.ffn = FFN(dim, ffn_dim, rng, dropout)
        self.drop1 = Dropout(dropout)
        self.drop2 = Dropout(dropout)

    def forward(self, tokens, pos, shapes, refs, scale_mask):
        """tokens [T,C]; pos [T,C] Tensor; shapes [(Hl,Wl)]; refs [T,2]
        normalized, numpy; scale_mask [T,1,L,1] numpy one-hot by scale."""
        t, c = tokens.data.shape
        m, k, levels = self.heads, self.points, self.levels
        cv = c // m
        q = tokens + pos
        off = self.off_proj(q).reshape(t, m, levels, k, 2)
        logits = self.w_proj(q).reshape(t, m, levels, k)
        if self.cross_scale:
            a = softmax(logits, axis=(-2, -1))
        else:
            a = softmax(logits, axis=-1) * Tensor(
                scale_mask.astype(tokens.data.dtype))
        val = self.val_proj(tokens)
        starts = np.cumsum([0] + [hh * ww for hh, ww in shapes])
        agg = None
        for l, (hh, ww) in enumerate(shapes):
            val_l = val[starts[l]:starts[l + 1]] \
                .reshape(hh, ww, m, cv).transpose(2, 3, 0, 1)
            ref_pix = refs * np.array([ww - 1, hh - 1], dtype=tokens.data.dtype)
            loc = off[:, :, l] + Tensor(ref_pix[:, None, None, :])
            part = deform_aggregate(val_l, loc, a[:, :, l])
            agg = part if agg is None else agg + part
        attn = self.out_proj(agg.reshape(t, c))
        x = self.norm1(tokens + self.drop1(attn))
        return self.norm2(x + self.drop2(self.ffn(x)))


class StandardEncoderLayer(Module):
    """Dense multi-head self-attention over all tokens of one camera."""

    def __init__(self, dim, heads, ffn_dim, rng, dropout=0.0):
        super().__init__()
        self.attn = MultiheadAttention(dim, heads, rng)
        self.norm1 = LayerNorm(dim)
        self.norm2 = LayerNorm(dim)
        self.ffn = FFN(dim, ffn_dim, rng, dropout)
        self.drop1 = Dropout(dropout)
        self.drop2 = Dropout(dropout)

    def forward(self, tokens, pos, shapes, refs, scale_mask):
        q = tokens + pos
        x = self.norm1(tokens + self.drop1(self.attn(q, q, tokens)))
        return self.norm2(x + self.drop2(self.ffn(x)))


class Encoder(Module):
    def __init__(self, dim, heads, points, ffn_dim, num_layers, in_channels,
                 rng, kind="deformable", cross_scale=True, dropout=0.0):
        super().__init__()
        if num_layers < 1:
            raise ValueError("encoder needs at least one layer")
        if dim % heads:
            raise ValueError(f"dim {dim} not divisible by heads {heads}")
        self.dim = dim
        self.kind = kind
        levels = len(in_channels)
        self.proj = ModuleList([Conv2d(c, dim, 1, rng) for c in in_channels])
        self.scale_embed = Parameter(uniform_init(rng, (levels, dim), dim ** -0.5))
        if kind == "deformable":
            layers = [DeformableEncoderLayer(dim, heads, points, levels, ffn_dim,
                                             rng, dropout, cross_scale)
                      for _ in range(num_layers)]
        elif kind == "standard":
            layers = [StandardEncoderLayer(dim, heads, ffn_dim, rng, dropout)
                      for _ in range(num_layers)]
        else:
            raise ValueError(f"unknown encoder attention kind: {kind!r}")
        self.layers = ModuleList(layers)

    def _token_geometry(self, shapes, dtype):
        refs, scale_id, pos = [], [], []
        for l, (hh, ww) in enumerate(shapes):
            ys, xs = np.meshgrid(np.arange(hh), np.arange(ww), indexing="ij")
            u = xs.reshape(-1) / max(ww - 1, 1)
            v = ys.reshape(-1) / max(hh - 1, 1)
            refs.append(np.stack([u, v], axis=1).astype(dtype))
            scale_id.append(np.full(hh * ww, l, dtype=np.int64))
            pos.append(sinusoidal_pos_2d(hh, ww, self.dim, dtype))
        refs = np.concatenate(refs, axis=0)
        scale_id = np.concatenate(scale_id)
        pos = np.concatenate(pos, axis=0)
        levels = len(shapes)
        mask = (scale_id[:, None] == np.arange(levels)[None, :])
        scale_mask = mask[:, None, :, None]  # [T,1,L,1]
        return refs, scale_id, pos, scale_mask

    def forward(self, stage_feats):
        """stage_feats: list of per-stage tensors [N_c, C_l, H_l, W_l]
        -> per camera, a list of enhanced [dim, H_l, W_l] maps."""
        cams = stage_feats[0].data.shape[0]
        dtype = stage_feats[0].data.dtype
        projected = [self.proj[l](f) for l, f in enumerate(stage_feats)]
        shapes = [(f.data.shape[2], f.data.shape[3]) for f in projected]
        refs, scale_id, pos_np, scale_mask = self._token_geometry(shapes, dtype)
        out = []
        for c in range(cams):
            toks = concat([projected[l][c].reshape(self.dim, hh * ww).transpose(1, 0)
                           for l, (hh, ww) in enumerate(shapes)], axis=0)
            pos = Tensor(pos_np) + self.scale_embed[scale_id]
            for layer in self.layers:
                toks = layer(toks, pos, shapes, refs, scale_mask)
            starts = np.cumsum([0] + [hh * ww for hh, ww in shapes])
            maps = [toks[starts[l]:starts[l + 1]].transpose(1, 0).reshape(self.dim, hh, ww)
                    for l, (hh, ww) in enumerate(shapes)]
            out.append(maps)
        return out
