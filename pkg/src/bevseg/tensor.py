"""Dense tensors with reverse-mode differentiation.

Every operation that produces a tensor records a closure able to push
the output adjoint back to its inputs.  ``backward()`` replays those
closures in exact reverse creation order, so every node runs after all
of its consumers and fan-out accumulates additively.

Only float32 and float64 are supported; integer input data is promoted
to float32.  Mixed-precision operands are rejected rather than silently
promoted.
"""

import contextlib
import itertools

import numpy as np

__all__ = [
    "Tensor",
    "ShapeError",
    "no_grad",
    "grad_enabled",
    "set_nan_checks",
    "nan_checks_enabled",
    "concat",
    "softmax",
]


class ShapeError(ValueError):
    """Raised when operand shapes cannot be combined."""


_grad_enabled = True
_nan_checks = False
_seq = itertools.count()


def grad_enabled():
    return _grad_enabled


@contextlib.contextmanager
def no_grad():
    """Disable graph recording within the block."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def set_nan_checks(flag):
    """When enabled, every op raises if it produces a non-finite value."""
    global _nan_checks
    _nan_checks = bool(flag)


def nan_checks_enabled():
    return _nan_checks


def _unbroadcast(g, shape):
    # reduce a broadcast gradient back to the operand's shape
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_backward", "_prev", "_seq")

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._backward = None
        self._prev = ()
        self._seq = next(_seq)

    # -- inspection ----------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{flag})"

    def item(self):
        return float(self.data.reshape(()))

    def numpy(self):
        return self.data

    def detach(self):
        return Tensor(self.data)

    def astype(self, dtype):
        """Detached copy in the given float precision."""
        return Tensor(self.data.astype(dtype), requires_grad=self.requires_grad)

    # -- autodiff machinery ---------------------------------------------

    def _accum(self, g):
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = g
        else:
            self.grad = self.grad + g

    def backward(self, grad=None):
        if not self.requires_grad:
            raise RuntimeError("backward() on a tensor that does not require grad")
        if grad is None:
            grad = np.ones_like(self.data)
        else:
            grad = np.asarray(grad, dtype=self.data.dtype)
            if grad.shape != self.data.shape:
                raise ShapeError(
                    f"seed gradient shape {grad.shape} != tensor shape {self.data.shape}")
        self.grad = grad if self.grad is None else self.grad + grad
        nodes = []
        seen = {id(self)}
        stack = [self]
        while stack:
            node = stack.pop()
            nodes.append(node)
            for p in node._prev:
                if id(p) not in seen:
                    seen.add(id(p))
                    stack.append(p)
        nodes.sort(key=lambda n: n._seq, reverse=True)
        for node in nodes:
            if node._backward is not None and node.grad is not None:
                node._backward()

    # -- elementwise arithmetic ------------------------------------------

    def __add__(self, other):
        other = _coerce(other, self)
        data = _broadcast_op(np.add, self, other, "add")
        out = _result(data, (self, other), "add")
        if out.requires_grad:
            a, b = self, other

            def _bwd():
                g = out.grad
                a._accum(_unbroadcast(g, a.data.shape))
                b._accum(_unbroadcast(g, b.data.shape))

            out._backward = _bwd
        return out

    __radd__ = __add__

    def __mul__(self, other):
        other = _coerce(other, self)
        data = _broadcast_op(np.multiply, self, other, "mul")
        out = _result(data, (self, other), "mul")
        if out.requires_grad:
            a, b = self, other

            def _bwd():
                g = out.grad
                a._accum(_unbroadcast(g * b.data, a.data.shape))
                b._accum(_unbroadcast(g * a.data, b.data.shape))

            out._backward = _bwd
        return out

    __rmul__ = __mul__

    def __neg__(self):
        out = _result(-self.data, (self,), "neg")
        if out.requires_grad:
            a = self

            def _bwd():
                a._accum(-out.grad)

            out._backward = _bwd
        return out

    def __sub__(self, other):
        other = _coerce(other, self)
        data = _broadcast_op(np.subtract, self, other, "sub")
        out = _result(data, (self, other), "sub")
        if out.requires_grad:
            a, b = self, other

            def _bwd():
                g = out.grad
                a._accum(_unbroadcast(g, a.data.shape))
                b._accum(_unbroadcast(-g, b.data.shape))

            out._backward = _bwd
        return out

    def __rsub__(self, other):
        return _coerce(other, self).__sub__(self)

    def __truediv__(self, other):
        other = _coerce(other, self)
        data = _broadcast_op(np.divide, self, other, "div")
        out = _result(data, (self, other), "div")
        if out.requires_grad:
            a, b = self, other

            def _bwd():
                g = out.grad
                a._accum(_unbroadcast(g / b.data, a.data.shape))
                b._accum(_unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

            out._backward = _bwd
        return out

    def __rtruediv__(self, other):
        return _coerce(other, self).__truediv__(self)

    def __pow__(self, exponent):
        # scalar exponent only; exponent < 1 assumes positive base
        p = float(exponent)
        out = _result(self.data ** p, (self,), "pow")
        if out.requires_grad:
            a = self

            def _bwd():
                a._accum(out.grad * p * a.data ** (p - 1.0))

            out._backward = _bwd
        return out

    def exp(self):
        out = _result(np.exp(self.data), (self,), "exp")
        if out.requires_grad:
            a = self

            def _bwd():
                a._accum(out.grad * out.data)

            out._backward = _bwd
        return out

    def log(self):
        out = _result(np.log(self.data), (self,), "log")
        if out.requires_grad:
            a = self

            def _bwd():
                a._accum(out.grad / a.data)

            out._backward = _bwd
        return out

    def sigmoid(self):
        x = self.data
        # evaluate in the half-plane where exp() cannot overflow
        ex = np.exp(-np.abs(x))
        s = np.where(x >= 0, 1.0 / (1.0 + ex), ex / (1.0 + ex)).astype(x.dtype)
        out = _result(s, (self,), "sigmoid")
        if out.requires_grad:
            a = self

            def _bwd():
                a._accum(out.grad * out.data * (1.0 - out.data))

            out._backward = _bwd
        return out

    def relu(self):
        out = _result(np.maximum(self.data, 0), (self,), "relu")
        if out.requires_grad:
            a = self

            def _bwd():
                a._accum(out.grad * (a.data > 0))

            out._backward = _bwd
        return out

    # -- linear algebra ----------------------------------------------------

    def matmul(self, other):
        other = _coerce(other, self)
        a, b = self, other
        if a.data.ndim < 2 or b.data.ndim < 2 or a.data.shape[-1] != b.data.shape[-2]:
            raise ShapeError(f"matmul: incompatible shapes {a.data.shape} x {b.data.shape}")
        _check_dtypes(a, b, "matmul")
        try:
            data = np.matmul(a.data, b.data)
        except ValueError as e:
            raise ShapeError(
                f"matmul: incompatible shapes {a.data.shape} x {b.data.shape}") from e
        out = _result(data, (a, b), "matmul")
        if out.requires_grad:

            def _bwd():
                g = out.grad
                if a.requires_grad:
                    a._accum(_unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)),
                                          a.data.shape))
                if b.requires_grad:
                    b._accum(_unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g),
                                          b.data.shape))

            out._backward = _bwd
        return out

    __matmul__ = matmul

    # -- reductions -------------------------------------------------------

    def sum(self, axis=None, keepdims=False):
        data = self.data.sum(axis=axis, keepdims=keepdims)
        out = _result(data, (self,), "sum")
        if out.requires_grad:
            a = self

            def _bwd():
                g = out.grad
                if axis is not None and not keepdims:
                    g = np.expand_dims(g, axis)
                a._accum(np.broadcast_to(g, a.data.shape).copy())

            out._backward = _bwd
        return out

    def mean(self, axis=None, keepdims=False):
        count = self.data.size if axis is None else np.prod(
            [self.data.shape[ax] for ax in np.atleast_1d(axis)])
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / float(count))

    # -- shape manipulation -------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.data.shape
        try:
            data = self.data.reshape(shape)
        except ValueError as e:
            raise ShapeError(f"reshape: cannot view {old} as {shape}") from e
        out = _result(data, (self,), "reshape")
        if out.requires_grad:
            a = self

            def _bwd():
                a._accum(out.grad.reshape(old))

            out._backward = _bwd
        return out

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        if not axes:
            axes = tuple(reversed(range(self.data.ndim)))
        inv = tuple(np.argsort(axes))
        out = _result(np.transpose(self.data, axes), (self,), "transpose")
        if out.requires_grad:
            a = self

            def _bwd():
                a._accum(np.transpose(out.grad, inv))

            out._backward = _bwd
        return out

    def __getitem__(self, idx):
        out = _result(self.data[idx], (self,), "getitem")
        if out.requires_grad:
            a = self

            def _bwd():
                g = np.zeros_like(a.data)
                np.add.at(g, idx, out.grad)
                a._accum(g)

            out._backward = _bwd
        return out


def _coerce(x, like):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=like.data.dtype))


def _check_dtypes(a, b, op):
    if a.data.dtype != b.data.dtype:
        raise TypeError(f"{op}: mixed dtypes {a.data.dtype} and {b.data.dtype}")


def _broadcast_op(fn, a, b, op):
    _check_dtypes(a, b, op)
    try:
        return fn(a.data, b.data)
    except ValueError as e:
        raise ShapeError(
            f"{op}: cannot broadcast {a.data.shape} with {b.data.shape}") from e


def _result(data, prev, op):
    if _nan_checks and not np.all(np.isfinite(data)):
        raise ArithmeticError(f"{op} produced non-finite values")
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in prev):
        out.requires_grad = True
        out._prev = tuple(prev)
    return out


def concat(tensors, axis=0):
    tensors = list(tensors)
    if not tensors:
        raise ShapeError("concat of zero tensors")
    for t in tensors[1:]:
        _check_dtypes(tensors[0], t, "concat")
    data = np.concatenate([t.data for t in tensors], axis=axis)
    out = _result(data, tuple(tensors), "concat")
    if out.requires_grad:
        sizes = [t.data.shape[axis] for t in tensors]
        splits = np.cumsum(sizes)[:-1]

        def _bwd():
            for t, g in zip(tensors, np.split(out.grad, splits, axis=axis)):
                t._accum(g)

        out._backward = _bwd
    return out


def softmax(x, axis=-1):
    """Softmax over one axis, or jointly over a pair of axes.

    For a pair, reductions run innermost-axis-first and stay nested, so
    permuting slices along the outer axis permutes the output without
    re-associating the inner sums.
    """
    if isinstance(axis, (tuple, list)):
        axes = tuple(int(a) % x.data.ndim for a in axis)
        if len(axes) != 2 or axes[0] == axes[1]:
            raise ShapeError(f"softmax: axis pair {axis} invalid for ndim {x.data.ndim}")
    else:
        axes = (int(axis) % x.data.ndim,)
    for ax in axes:
        if x.data.shape[ax] == 0:
            raise ShapeError(f"softmax over empty axis {ax} of shape {x.data.shape}")

    def _nested_sum(arr):
        for ax in sorted(axes, reverse=True):
            arr = arr.sum(axis=ax, keepdims=True)
        return arr

    m = x.data.max(axis=axes, keepdims=True)
    e = np.exp(x.data - m)
    s = e / _nested_sum(e)
    out = _result(s, (x,), "softmax")
    if out.requires_grad:

        def _bwd():
            g = out.grad
            dot = _nested_sum(g * out.data)
            x._accum(out.data * (g - dot))

        out._backward = _bwd
    return out
