"""Central finite-difference verification of tape gradients."""

import numpy as np

__all__ = ["grad_check"]


def grad_check(f, wrt, eps=1e-5, floor=1e-3, max_entries=None, rng=None):
    """Compare tape gradients of a scalar function against central differences.

    `f` is a zero-argument callable returning a scalar Tensor; it must
    be deterministic and must read the tensors in `wrt` in place.  All
    checked tensors must be float64.  Returns the maximum relative
    error max|a - n| / max(|a|, |n|, floor) over all checked entries;
    the floor keeps near-zero gradients from being compared at the
    noise scale of the difference quotient.

    `max_entries` caps the number of coordinates probed per tensor
    (sampled with `rng`); by default every coordinate is probed.
    """
    from .tensor import no_grad

    for t in wrt:
        if t.data.dtype != np.float64:
            raise TypeError(f"grad_check requires float64 tensors, got {t.data.dtype}")
        t.data = np.ascontiguousarray(t.data)  # reshape(-1) below must be a view
        t.grad = None
    out = f()
    if out.data.shape != ():
        raise ValueError(f"grad_check needs a scalar function, got shape {out.data.shape}")
    out.backward()
    analytic = [np.array(t.grad) if t.grad is not None else np.zeros_like(t.data)
                for t in wrt]

    worst = 0.0
    for t, a in zip(wrt, analytic):
        flat = t.data.reshape(-1)
        aflat = a.reshape(-1)
        n = flat.size
        if max_entries is not None and n > max_entries:
            if rng is None:
                rng = np.random.default_rng(0)
            idxs = np.sort(rng.choice(n, size=max_entries, replace=False))
        else:
            idxs = range(n)
        for i in idxs:
            orig = flat[i]
            with no_grad():
                flat[i] = orig + eps
                lp = f().item()
                flat[i] = orig - eps
                lm = f().item()
            flat[i] = orig
            num = (lp - lm) / (2.0 * eps)
            ai = float(aflat[i])
            rel = abs(ai - num) / max(abs(ai), abs(num), floor)
            worst = max(worst, rel)
    return worst
