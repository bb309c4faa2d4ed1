"""Named finite-difference checks for every differentiable operation.

Each entry builds a deterministic scalar function of a few float64
tensors and compares tape gradients against central differences via
grad_check.  Elementwise entries are held to 1e-6 relative error,
matmul to 1e-7, structured ops to 1e-5, and composed network blocks
to 1e-4.  run_all() returns one (name, worst, limit, passed) row per
entry and is what the CLI's gradcheck subcommand prints.
"""

import numpy as np

from . import ops
from .backbone import Backbone
from .decoder import DecoderLayer, Decoder
from .encoder import Encoder
from .gradcheck import grad_check
from .nn import MultiheadAttention
from .sampling import FeatureMap, bilinear_sample, deform_aggregate, grid_sample
from .seg_head import SegHead
from .tensor import Tensor, concat, softmax

__all__ = ["SUITE", "run_all", "run_one"]

ELEMENTWISE = 1e-6
MATMUL = 1e-7
STRUCTURED = 1e-5
COMPOSED = 1e-4


def _t(rng, *shape):
    return Tensor(rng.standard_normal(shape), requires_grad=True)


def _jitter(module, rng, scale=0.05):
    # composed blocks are checked away from the zero-heavy init: exact
    # zeros from zero-init biases can park relu inputs on the kink,
    # where central differences straddle two linear pieces
    for _, p in module.named_parameters():
        p.data = p.data + rng.standard_normal(p.data.shape) * scale


def _pos(rng, *shape):
    return Tensor(rng.uniform(0.5, 2.0, shape), requires_grad=True)


def _away_from_kink(rng, *shape):
    # keep relu inputs off zero so finite differences see one linear piece
    x = rng.standard_normal(shape)
    x = np.where(np.abs(x) < 0.2, np.sign(x) * 0.2 + x, x)
    return Tensor(x, requires_grad=True)


def _check_add(rng):
    a, b = _t(rng, 3, 4), _t(rng, 4)
    return lambda: ((a + b) * 2.0 + 0.5).sum(), [a, b]


def _check_mul(rng):
    a, b = _t(rng, 2, 3, 4), _t(rng, 3, 1)
    return lambda: (a * b).sum(), [a, b]


def _check_sub_neg(rng):
    a, b = _t(rng, 5), _t(rng, 5)
    return lambda: (a - b - (-a)).sum(), [a, b]


def _check_div(rng):
    a, b = _t(rng, 4, 3), _pos(rng, 4, 3)
    return lambda: (a / b + 1.0 / b).sum(), [a, b]


def _check_pow(rng):
    a = _pos(rng, 6)
    return lambda: (a ** 3 + a ** -0.5).sum(), [a]


def _check_exp(rng):
    a = _t(rng, 3, 3)
    return lambda: a.exp().sum(), [a]


def _check_log(rng):
    a = _pos(rng, 7)
    return lambda: a.log().sum(), [a]


def _check_sigmoid(rng):
    a = _t(rng, 2, 5)
    return lambda: (a.sigmoid() * 3.0).sum(), [a]


def _check_relu(rng):
    a = _away_from_kink(rng, 4, 4)
    return lambda: (a.relu() * 2.0).sum(), [a]


def _check_matmul(rng):
    a, b = _t(rng, 3, 4), _t(rng, 4, 2)
    return lambda: (a @ b).sum(), [a, b]


def _check_matmul_batched(rng):
    a, b = _t(rng, 2, 3, 4), _t(rng, 2, 4, 5)
    return lambda: ((a @ b) * (a @ b)).sum(), [a, b]


def _check_sum_mean(rng):
    a = _t(rng, 3, 4, 2)
    return lambda: (a.sum(axis=1) * a.mean(axis=(0, 2), keepdims=True).sum()).sum(), [a]


def _check_reshape_transpose(rng):
    a = _t(rng, 3, 4)
    return lambda: (a.reshape(2, 6).transpose(1, 0) * 1.5).sum(), [a]


def _check_getitem(rng):
    a = _t(rng, 5, 6)
    idx = np.array([0, 2, 2, 4])
    return lambda: (a[1:4, ::2].sum() + a[idx].sum()), [a]


def _check_concat(rng):
    a, b = _t(rng, 2, 3), _t(rng, 4, 3)
    return lambda: (concat([a, b], axis=0) ** 2).sum(), [a, b]


def _check_softmax(rng):
    a = _t(rng, 4, 5)
    w = Tensor(rng.standard_normal((4, 5)))
    return lambda: (softmax(a, axis=-1) * w).sum(), [a]


def _check_softmax_joint(rng):
    a = _t(rng, 3, 2, 4)
    w = Tensor(rng.standard_normal((3, 2, 4)))
    return lambda: (softmax(a, axis=(-2, -1)) * w).sum(), [a]


def _check_linear(rng):
    x = _t(rng, 5, 3)
    w = _t(rng, 4, 3)
    b = _t(rng, 4)
    return lambda: (ops.linear(x, w, b) ** 2).sum(), [x, w, b]


def _check_conv2d(rng):
    x = _t(rng, 2, 5, 5)
    w = _t(rng, 3, 2, 3, 3)
    b = _t(rng, 3)
    return lambda: (ops.conv2d(x, w, b, stride=2, padding=1) ** 2).sum(), [x, w, b]


def _check_layer_norm(rng):
    x = _t(rng, 3, 6)
    g, b = _pos(rng, 6), _t(rng, 6)
    return lambda: (ops.layer_norm(x, g, b) ** 2).sum(), [x, g, b]


def _check_batch_norm(rng):
    x = _t(rng, 2, 3, 4, 4)
    g, b = _pos(rng, 3), _t(rng, 3)
    return lambda: (ops.batch_norm_train(x, g, b)[0] ** 2).sum(), [x, g, b]


def _check_dropout(rng):
    x = _t(rng, 6, 6)

    def f():
        # identical mask on every call so the function is deterministic
        return (ops.dropout(x, 0.4, np.random.default_rng(99), training=True) ** 2).sum()

    return f, [x]


def _check_cross_entropy(rng):
    logits = _t(rng, 4, 3, 5)
    target = rng.integers(0, 4, size=(3, 5))
    weights = np.array([1.0, 15.0, 15.0, 15.0])
    return lambda: ops.weighted_cross_entropy(logits, target, weights), [logits]


def _check_bilinear_resize(rng):
    x = _t(rng, 2, 3, 4)
    return lambda: (ops.bilinear_resize(x, (6, 8)) ** 2).sum(), [x]


def _check_grid_sample(rng):
    feat = _t(rng, 3, 5, 6)
    xy = Tensor(rng.uniform(-0.5, 5.5, (7, 2)), requires_grad=True)
    return lambda: (grid_sample(feat, xy) ** 2).sum(), [feat, xy]


def _check_bilinear_sample(rng):
    feat = _t(rng, 4, 6, 6)
    p = Tensor(rng.uniform(0.1, 0.9, (2,)), requires_grad=True)
    fmap = FeatureMap(feat, stride=32, scale=0, camera=0)
    return lambda: (bilinear_sample(fmap, p) ** 2).sum(), [feat, p]


def _check_deform_aggregate(rng):
    value = _t(rng, 2, 3, 5, 5)
    loc = Tensor(rng.uniform(-0.5, 4.5, (4, 2, 3, 2)), requires_grad=True)
    w = Tensor(rng.uniform(0.1, 1.0, (4, 2, 3)), requires_grad=True)
    return lambda: (deform_aggregate(value, loc, w) ** 2).sum(), [value, loc, w]


def _check_attention(rng):
    mha = MultiheadAttention(8, 2, rng).astype(np.float64)
    q, k, v = _t(rng, 3, 8), _t(rng, 5, 8), _t(rng, 5, 8)
    params = [p for _, p in mha.named_parameters()]
    return lambda: (mha(q, k, v) ** 2).sum(), params + [q, k, v]


def _composed_backbone(rng):
    net = Backbone(rng, widths=(4, 6, 8), stem_channels=4,
                   blocks_per_stage=1).astype(np.float64)
    net.eval()
    _jitter(net, rng)
    x = _t(rng, 1, 3, 32, 32)
    params = [p for _, p in net.named_parameters()]

    def f():
        return sum((s ** 2).sum() for s in net(x))

    return f, params + [x]


def _composed_encoder_layer(rng):
    enc = Encoder(8, 2, 2, 16, 1, (4, 6, 8), rng).astype(np.float64)
    enc.eval()
    _jitter(enc, rng)
    stages = [_t(rng, 1, 4, 16, 16), _t(rng, 1, 6, 8, 8), _t(rng, 1, 8, 4, 4)]
    params = [p for _, p in enc.named_parameters()]

    def f():
        maps = enc(stages)[0]
        return sum((m ** 2).sum() for m in maps)

    return f, params + stages


def _composed_decoder_layer(rng):
    dec = Decoder(8, 2, 2, 2, 16, 1, (2, 3), rng).astype(np.float64)
    dec.eval()
    _jitter(dec, rng)
    maps = [_t(rng, 8, 4, 5), _t(rng, 8, 4, 5)]
    params = [p for _, p in dec.named_parameters()]

    def f():
        z, _ = dec(maps)
        return (z ** 2).sum()

    return f, params + maps


def _composed_standard_decoder_layer(rng):
    layer = DecoderLayer(8, 2, 2, 2, 16, rng, kind="standard").astype(np.float64)
    layer.eval()
    _jitter(layer, rng)
    z = _t(rng, 4, 8)
    qp = _t(rng, 4, 8)
    maps = [_t(rng, 8, 3, 4), _t(rng, 8, 3, 4)]
    params = [p for _, p in layer.named_parameters()]

    def f():
        return (layer(z, qp, maps, None) ** 2).sum()

    return f, params + [z, qp] + maps


def _composed_seg_head(rng):
    head = SegHead(8, 3, (2, 3), rng).astype(np.float64)
    head.eval()
    _jitter(head, rng)
    z = _t(rng, 6, 8)
    params = [p for _, p in head.named_parameters()]
    return lambda: (head(z) ** 2).sum(), params + [z]


SUITE = [
    ("add", ELEMENTWISE, _check_add),
    ("mul", ELEMENTWISE, _check_mul),
    ("sub_neg", ELEMENTWISE, _check_sub_neg),
    ("div", ELEMENTWISE, _check_div),
    ("pow", ELEMENTWISE, _check_pow),
    ("exp", ELEMENTWISE, _check_exp),
    ("log", ELEMENTWISE, _check_log),
    ("sigmoid", ELEMENTWISE, _check_sigmoid),
    ("relu", ELEMENTWISE, _check_relu),
    ("matmul", MATMUL, _check_matmul),
    ("matmul_batched", MATMUL, _check_matmul_batched),
    ("sum_mean", ELEMENTWISE, _check_sum_mean),
    ("reshape_transpose", ELEMENTWISE, _check_reshape_transpose),
    ("getitem", ELEMENTWISE, _check_getitem),
    ("concat", ELEMENTWISE, _check_concat),
    ("softmax", ELEMENTWISE, _check_softmax),
    ("softmax_joint", ELEMENTWISE, _check_softmax_joint),
    ("linear", MATMUL, _check_linear),
    ("conv2d", ELEMENTWISE, _check_conv2d),
    ("layer_norm", ELEMENTWISE, _check_layer_norm),
    ("batch_norm", STRUCTURED, _check_batch_norm),
    ("dropout", ELEMENTWISE, _check_dropout),
    ("cross_entropy", STRUCTURED, _check_cross_entropy),
    ("bilinear_resize", STRUCTURED, _check_bilinear_resize),
    ("grid_sample", STRUCTURED, _check_grid_sample),
    ("bilinear_sample", STRUCTURED, _check_bilinear_sample),
    ("deform_aggregate", STRUCTURED, _check_deform_aggregate),
    ("attention", STRUCTURED, _check_attention),
    ("backbone_block", COMPOSED, _composed_backbone),
    ("encoder_layer", COMPOSED, _composed_encoder_layer),
    ("decoder_layer", COMPOSED, _composed_decoder_layer),
    ("decoder_layer_standard", COMPOSED, _composed_standard_decoder_layer),
    ("semantic_head", COMPOSED, _composed_seg_head),
]

_COMPOSED_BUDGET = 4  # FD probes per tensor for the composed blocks


def run_one(name, seed=0):
    pos, (limit, builder) = next(
        (i, (lim, b)) for i, (n, lim, b) in enumerate(SUITE) if n == name)
    rng = np.random.default_rng([seed, pos])
    f, wrt = builder(rng)
    max_entries = _COMPOSED_BUDGET if limit == COMPOSED else None
    worst = grad_check(f, wrt, max_entries=max_entries,
                       rng=np.random.default_rng(seed))
    return worst, limit


def run_all(seed=0):
    rows = []
    for name, limit, _ in SUITE:
        worst, _ = run_one(name, seed)
        rows.append((name, worst, limit, worst < limit))
    return rows
