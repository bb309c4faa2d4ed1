"""Module containers and standard layers.

Modules discover parameters, buffers and submodules by walking their
attributes in insertion order, so checkpoint names are stable for a
fixed architecture.  Constructors take an explicit numpy Generator;
nothing here touches global random state.
"""

import numpy as np

from . import ops
from .tensor import Tensor

__all__ = [
    "Parameter",
    "Buffer",
    "Module",
    "ModuleList",
    "Sequential",
    "Linear",
    "Conv2d",
    "BatchNorm2d",
    "LayerNorm",
    "Dropout",
    "ReLU",
    "FFN",
    "MultiheadAttention",
    "uniform_init",
]


class Parameter(Tensor):
    def __init__(self, data, requires_grad=True):
        super().__init__(data, requires_grad=requires_grad)


class Buffer:
    """Non-differentiable module state (running statistics and the like)."""

    __slots__ = ("data",)

    def __init__(self, data):
        self.data = np.asarray(data)


def uniform_init(rng, shape, bound, dtype=np.float32):
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Module:
    def __init__(self):
        self.training = True

    def named_parameters(self, prefix=""):
        for name, v in vars(self).items():
            if isinstance(v, Parameter):
                yield prefix + name, v
            elif isinstance(v, Module):
                yield from v.named_parameters(f"{prefix}{name}.")

    def named_buffers(self, prefix=""):
        for name, v in vars(self).items():
            if isinstance(v, Buffer):
                yield prefix + name, v
            elif isinstance(v, Module):
                yield from v.named_buffers(f"{prefix}{name}.")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def modules(self):
        yield self
        for v in vars(self).values():
            if isinstance(v, Module):
                yield from v.modules()

    def train(self, flag=True):
        for m in self.modules():
            m.training = flag
        return self

    def eval(self):
        return self.train(False)

    def astype(self, dtype):
        for _, p in self.named_parameters():
            p.data = p.data.astype(dtype)
        for _, b in self.named_buffers():
            if b.data.dtype in (np.float32, np.float64):
                b.data = b.data.astype(dtype)
        return self

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def reseed_dropout(self, entropy):
        """Give every dropout submodule a fresh generator derived from
        `entropy` (a list of ints) and its position in the module walk."""
        i = 0
        for m in self.modules():
            if isinstance(m, Dropout):
                m._rng = np.random.default_rng(list(entropy) + [i])
                i += 1

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


class ModuleList(Module):
    def __init__(self, mods=()):
        super().__init__()
        self._items = list(mods)

    def __iter__(self):
        return iter(self._items)

    def __len__(self):
        return len(self._items)

    def __getitem__(self, i):
        return self._items[i]

    def append(self, m):
        self._items.append(m)

    def named_parameters(self, prefix=""):
        for i, m in enumerate(self._items):
            yield from m.named_parameters(f"{prefix}{i}.")

    def named_buffers(self, prefix=""):
        for i, m in enumerate(self._items):
            yield from m.named_buffers(f"{prefix}{i}.")

    def modules(self):
        yield self
        for m in self._items:
            yield from m.modules()


class Sequential(ModuleList):
    def __init__(self, *items):
        super().__init__(list(items))

    def forward(self, x):
        for m in self._items:
            x = m(x)
        return x


class Linear(Module):
    def __init__(self, in_features, out_features, rng, bias=True):
        super().__init__()
        bound = (1.0 / in_features) ** 0.5
        self.weight = Parameter(uniform_init(rng, (out_features, in_features), bound))
        self.bias = Parameter(uniform_init(rng, (out_features,), bound)) if bias else None

    def forward(self, x):
        return ops.linear(x, self.weight, self.bias)


class Conv2d(Module):
    def __init__(self, in_channels, out_channels, kernel_size, rng,
                 stride=1, padding=0, bias=True):
        super().__init__()
        kh, kw = (kernel_size, kernel_size) if np.isscalar(kernel_size) else kernel_size
        self.stride = stride
        self.padding = padding
        bound = (1.0 / (in_channels * kh * kw)) ** 0.5
        self.weight = Parameter(
            uniform_init(rng, (out_channels, in_channels, kh, kw), bound))
        self.bias = Parameter(uniform_init(rng, (out_channels,), bound)) if bias else None

    def forward(self, x):
        return ops.conv2d(x, self.weight, self.bias,
                          stride=self.stride, padding=self.padding)


class BatchNorm2d(Module):
    """Per-channel batch normalization over (N, H, W).

    track_stats=False skips the running averages and normalizes with
    current-batch statistics in eval mode too; use it where the batch
    is a single map and running averages cannot represent the
    per-sample normalization the network was trained with.
    """

    def __init__(self, num_features, eps=1e-5, momentum=0.9, track_stats=True):
        super().__init__()
        self.eps = eps
        self.momentum = momentum
        self.track_stats = track_stats
        self.gamma = Parameter(np.ones(num_features, dtype=np.float32))
        self.beta = Parameter(np.zeros(num_features, dtype=np.float32))
        if track_stats:
            self.running_mean = Buffer(np.zeros(num_features, dtype=np.float32))
            self.running_var = Buffer(np.ones(num_features, dtype=np.float32))

    def forward(self, x):
        c = self.gamma.data.shape[0]
        if self.training or not self.track_stats:
            out, mean, var = ops.batch_norm_train(x, self.gamma, self.beta, self.eps)
            if self.training and self.track_stats:
                m = self.momentum
                self.running_mean.data = (m * self.running_mean.data
                                          + (1.0 - m) * mean.astype(self.running_mean.data.dtype))
                self.running_var.data = (m * self.running_var.data
                                         + (1.0 - m) * var.astype(self.running_var.data.dtype))
            return out
        dt = x.data.dtype
        shift = Tensor((-self.running_mean.data).reshape(1, c, 1, 1).astype(dt))
        inv = Tensor((1.0 / np.sqrt(self.running_var.data + self.eps))
                     .reshape(1, c, 1, 1).astype(dt))
        xhat = (x + shift) * inv
        return xhat * self.gamma.reshape(1, c, 1, 1) + self.beta.reshape(1, c, 1, 1)


class LayerNorm(Module):
    def __init__(self, dim, eps=1e-5):
        super().__init__()
        self.eps = eps
        self.gamma = Parameter(np.ones(dim, dtype=np.float32))
        self.beta = Parameter(np.zeros(dim, dtype=np.float32))

    def forward(self, x):
        return ops.layer_norm(x, self.gamma, self.beta, self.eps)


class Dropout(Module):
    def __init__(self, rate):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = float(rate)
        self._rng = np.random.default_rng(0)

    def forward(self, x):
        return ops.dropout(x, self.rate, self._rng, self.training)


class ReLU(Module):
    def forward(self, x):
        return x.relu()


class FFN(Module):
    """Position-wise feed-forward sublayer: linear, relu, dropout, linear."""

    def __init__(self, dim, hidden, rng, dropout_rate=0.0):
        super().__init__()
        self.lin1 = Linear(dim, hidden, rng)
        self.lin2 = Linear(hidden, dim, rng)
        self.drop = Dropout(dropout_rate)

    def forward(self, x):
        return self.lin2(self.drop(self.lin1(x).relu()))


class MultiheadAttention(Module):
    """Dense scaled-dot-product attention with separate q/k/v inputs.

    Large query sets are processed in row chunks; softmax is per query
    row, so chunking leaves the result unchanged while bounding the
    [heads, chunk, N_k] score buffer.
    """

    def __init__(self, dim, heads, rng, chunk=1024):
        super().__init__()
        if dim % heads != 0:
            raise ValueError(f"embedding dim {dim} not divisible by {heads} heads")
        self.dim = dim
        self.heads = heads
        self.chunk = chunk
        self.wq = Linear(dim, dim, rng)
        self.wk = Linear(dim, dim, rng)
        self.wv = Linear(dim, dim, rng)
        self.wo = Linear(dim, dim, rng)

    def _split(self, x, n):
        # [n, C] -> [heads, n, C/heads]
        return x.reshape(n, self.heads, self.dim // self.heads).transpose(1, 0, 2)

    def forward(self, q_in, k_in, v_in):
        from .tensor import concat, softmax

        nq = q_in.data.shape[0]
        nk = k_in.data.shape[0]
        scale = (self.dim // self.heads) ** -0.5
        q = self._split(self.wq(q_in), nq) * scale
        k = self._split(self.wk(k_in), nk)
        v = self._split(self.wv(v_in), nk)
        kt = k.transpose(0, 2, 1)

        def block(qb):
            return softmax(qb.matmul(kt), axis=-1).matmul(v)

        if nq <= self.chunk:
            out = block(q)
        else:
            parts = [block(q[:, i:i + self.chunk]) for i in range(0, nq, self.chunk)]
            out = concat(parts, axis=1)
        return self.wo(out.transpose(1, 0, 2).reshape(nq, self.dim))
