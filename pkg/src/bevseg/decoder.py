"""BEV query decoder over multi-camera feature maps.

Dense grid queries cross-attend to the cameras' stride-32 maps either
through multi-camera deformable attention (per-head, per-camera learned
reference points, K sampled offsets each, weights softmaxed jointly over
cameras and points) or through dense attention over all camera tokens
(the ablation path, optionally with a learnable per-camera embedding).

The model never receives camera geometry; everything spatial is learned
from the query position embeddings.
"""

import copy

import numpy as np

from .encoder import radial_offset_bias, sinusoidal_pos_2d
from .nn import (Dropout, FFN, LayerNorm, Linear, Module, ModuleList,
                 MultiheadAttention, Parameter, uniform_init)
from .sampling import deform_aggregate
from .tensor import ShapeError, Tensor, concat, softmax

__all__ = ["Decoder", "DecoderLayer", "camera_permutation_transport"]


class DeformableCrossAttention(Module):
    """The view-transformation attention: for each query and head, sample
    K offset points around a per-camera reference on every camera's map
    and blend them with weights normalized over all (camera, point)
    pairs.  Cameras are aggregated innermost-first: each camera's K
    samples reduce inside the kernel, then camera partials add in fixed
    order."""

    def __init__(self, dim, heads, points, cameras, rng):
        super().__init__()
        self.dim = dim
        self.heads = heads
        self.points = points
        self.cameras = cameras
        self.off_proj = Linear(dim, heads * cameras * points * 2, rng)
        self.w_proj = Linear(dim, heads * cameras * points, rng)
        self.val_proj = Linear(dim, dim, rng)
        self.out_proj = Linear(dim, dim, rng)
        self.off_proj.weight.data[:] = 0.0
        self.off_proj.bias.data[:] = radial_offset_bias(heads, cameras, points)
        self.w_proj.weight.data[:] = 0.0
        self.w_proj.bias.data[:] = 0.0

    def predict_offsets_and_weights(self, q):
        nq = q.data.shape[0]
        m, nc, k = self.heads, self.cameras, self.points
        off = self.off_proj(q).reshape(nq, m, nc, k, 2)
        a = softmax(self.w_proj(q).reshape(nq, m, nc, k), axis=(-2, -1))
        return off, a

    def forward(self, q, cam_maps, ref_norm, capture=None):
        """q [N_q,C] queries with positions added; cam_maps: list of
        [C,H,W] tensors; ref_norm [N_q,M,N_c,2] in (0,1)."""
        nq, c = q.data.shape
        m, nc, k = self.heads, self.cameras, self.points
        cv = c // m
        if len(cam_maps) != nc:
            raise ShapeError(f"expected {nc} camera maps, got {len(cam_maps)}")
        off, a = self.predict_offsets_and_weights(q)
        agg = None
        locs = []
        for ci, fmap in enumerate(cam_maps):
            hh, ww = fmap.data.shape[1], fmap.data.shape[2]
            val = self.val_proj(fmap.reshape(c, hh * ww).transpose(1, 0)) \
                .reshape(hh, ww, m, cv).transpose(2, 3, 0, 1)
            scale = Tensor(np.array([ww - 1, hh - 1], dtype=q.data.dtype))
            ref_pix = ref_norm[:, :, ci] * scale
            loc = off[:, :, ci] + ref_pix.reshape(nq, m, 1, 2)
            part = deform_aggregate(val, loc, a[:, :, ci])
            agg = part if agg is None else agg + part
            if capture is not None:
                locs.append(loc.data.copy())
        if capture is not None:
            capture["loc"] = np.stack(locs, axis=2)  # [N_q, M, N_c, K, 2]
            capture["weight"] = a.data.copy()
            capture["ref"] = ref_norm.data.copy()
        return self.out_proj(agg.reshape(nq, c))


class StandardCrossAttention(Module):
    """Dense attention from every query to every camera token; the
    optional camera embedding is added to the keys of its camera."""

    def __init__(self, dim, heads, cameras, rng):
        super().__init__()
        self.cameras = cameras
        self.mha = MultiheadAttention(dim, heads, rng)

    def forward(self, q, cam_maps, cam_embed=None):
        if len(cam_maps) != self.cameras:
            raise ShapeError(f"expected {self.cameras} camera maps, got {len(cam_maps)}")
        keys, vals = [], []
        for ci, fmap in enumerate(cam_maps):
            c, hh, ww = fmap.data.shape
            toks = fmap.reshape(c, hh * ww).transpose(1, 0)
            pos = Tensor(sinusoidal_pos_2d(hh, ww, c, fmap.data.dtype))
            key = toks + pos
            if cam_embed is not None:
                key = key + cam_embed[ci]
            keys.append(key)
            vals.append(toks)
        return self.mha(q, concat(keys, axis=0), concat(vals, axis=0))


class DecoderLayer(Module):
    def __init__(self, dim, heads, points, cameras, ffn_dim, rng,
                 kind="deformable", query_self_attn=True, dropout=0.0):
        super().__init__()
        self.kind = kind
        if query_self_attn:
            self.self_attn = MultiheadAttention(dim, heads, rng)
            self.norm_sa = LayerNorm(dim)
            self.drop_sa = Dropout(dropout)
        else:
            self.self_attn = None
        if kind == "deformable":
            self.cross = DeformableCrossAttention(dim, heads, points, cameras, rng)
        elif kind == "standard":
            self.cross = StandardCrossAttention(dim, heads, cameras, rng)
        else:
            raise ValueError(f"unknown decoder attention kind: {kind!r}")
        self.norm_ca = LayerNorm(dim)
        self.drop_ca = Dropout(dropout)
        self.ffn = FFN(dim, ffn_dim, rng, dropout)
        self.norm_ffn = LayerNorm(dim)
        self.drop_ffn = Dropout(dropout)

    def forward(self, z, query_pos, cam_maps, ref_norm, cam_embed=None,
                capture=None):
        if self.self_attn is not None:
            qk = z + query_pos
            z = self.norm_sa(z + self.drop_sa(self.self_attn(qk, qk, z)))
        q = z + query_pos
        if self.kind == "deformable":
            att = self.cross(q, cam_maps, ref_norm, capture)
        else:
            att = self.cross(q, cam_maps, cam_embed)
        z = self.norm_ca(z + self.drop_ca(att))
        return self.norm_ffn(z + self.drop_ffn(self.ffn(z)))


class Decoder(Module):
    def __init__(self, dim, heads, points, cameras, ffn_dim, num_layers,
                 grid_hw, rng, kind="deformable", camera_embed=False,
                 query_self_attn=True, dropout=0.0):
        super().__init__()
        if dim % heads:
            raise ValueError(f"dim {dim} not divisible by heads {heads}")
        if points < 1 or cameras < 1 or num_layers < 1:
            raise ValueError("points, cameras and num_layers must be at least 1")
        self.dim = dim
        self.heads = heads
        self.points = points
        self.cameras = cameras
        self.kind = kind
        self.grid_hw = (int(grid_hw[0]), int(grid_hw[1]))
        nq = self.grid_hw[0] * self.grid_hw[1]
        self.num_queries = nq
        bound = dim ** -0.5
        self.query_embed = Parameter(uniform_init(rng, (nq, dim), bound))
        self.query_pos = Parameter(uniform_init(rng, (nq, dim), bound))
        self.ref_proj = Linear(dim, heads * cameras * 2, rng) \
            if kind == "deformable" else None
        if camera_embed:
            self.cam_embed = Parameter(uniform_init(rng, (cameras, dim), bound))
        else:
            self.cam_embed = None
        self.layers = ModuleList([
            DecoderLayer(dim, heads, points, cameras, ffn_dim, rng, kind,
                         query_self_attn, dropout)
            for _ in range(num_layers)
        ])

    def predict_reference_points(self):
        """Sigmoid-normalized per-(query, head, camera) anchors, from the
        query position embeddings; shared by every layer."""
        nq = self.num_queries
        return self.ref_proj(self.query_pos).sigmoid() \
            .reshape(nq, self.heads, self.cameras, 2)

    def forward(self, cam_maps, capture=False):
        """cam_maps: list of [C, H, W] tensors, one per camera ->
        ([N_q, C] queries, per-layer capture list or None)."""
        if len(cam_maps) != self.cameras:
            raise ShapeError(f"expected {self.cameras} camera maps, got {len(cam_maps)}")
        if self.cam_embed is not None and self.kind == "deformable":
            cam_maps = [m + self.cam_embed[ci].reshape(-1, 1, 1)
                        for ci, m in enumerate(cam_maps)]
        key_embed = self.cam_embed if self.kind == "standard" else None
        ref = self.predict_reference_points() if self.ref_proj is not None else None
        z = self.query_embed
        captures = [] if capture else None
        for layer in self.layers:
            cap = {} if capture else None
            z = layer(z, self.query_pos, cam_maps, ref, key_embed, cap)
            if capture:
                captures.append(cap)
        return z, captures


def camera_permutation_transport(decoder, perm, in_place=False):
    """Permute the camera-indexed parameter blocks so that
    decoder'(permuted maps) == decoder(original maps), where the
    permuted map list is [maps[perm[0]], maps[perm[1]], ...].

    Returns the transported decoder (a deep copy unless in_place).
    """
    perm = np.asarray(perm)
    nc = decoder.cameras
    if sorted(perm.tolist()) != list(range(nc)):
        raise ValueError(f"not a permutation of {nc} cameras: {perm}")
    dec = decoder if in_place else copy.deepcopy(decoder)

    def take(arr, block_shape):
        # arr views as [M, N_c, *block, (in_dim?)]; gather along camera axis
        view = arr.reshape(block_shape)
        return np.take(view, perm, axis=1).reshape(arr.shape).copy()

    m = dec.heads
    k = dec.points
    if dec.ref_proj is not None:
        rp = dec.ref_proj
        rp.weight.data = take(rp.weight.data, (m, nc, 2, -1))
        rp.bias.data = take(rp.bias.data, (m, nc, 2))
    for layer in dec.layers:
        cross = layer.cross
        if isinstance(cross, DeformableCrossAttention):
            cross.off_proj.weight.data = take(cross.off_proj.weight.data,
                                              (m, nc, k, 2, -1))
            cross.off_proj.bias.data = take(cross.off_proj.bias.data, (m, nc, k, 2))
            cross.w_proj.weight.data = take(cross.w_proj.weight.data, (m, nc, k, -1))
            cross.w_proj.bias.data = take(cross.w_proj.bias.data, (m, nc, k))
    if dec.cam_embed is not None:
        dec.cam_embed.data = dec.cam_embed.data[perm].copy()
    return dec
