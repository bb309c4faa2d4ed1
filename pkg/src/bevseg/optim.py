"""AdamW with decoupled weight decay and parameter groups."""

import numpy as np

from .tensor import nan_checks_enabled

__all__ = ["AdamW"]


class AdamW:
    """param_groups: list of {"params": [...], "lr": float, "weight_decay": float}.

    Decay is decoupled: parameters shrink by lr*decay directly, and the
    moment estimates see only the raw gradients.  Parameters whose grad
    is None are skipped entirely (no decay either).
    """

    def __init__(self, param_groups, betas=(0.9, 0.999), eps=1e-8):
        self.groups = []
        for g in param_groups:
            self.groups.append({
                "params": list(g["params"]),
                "lr": float(g["lr"]),
                "weight_decay": float(g.get("weight_decay", 0.0)),
            })
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.step_count = 0
        self._state = {}

    def zero_grad(self):
        for g in self.groups:
            for p in g["params"]:
                p.grad = None

    def step(self):
        self.step_count += 1
        t = self.step_count
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** t
        c2 = 1.0 - b2 ** t
        for group in self.groups:
            lr = group["lr"]
            wd = group["weight_decay"]
            for p in group["params"]:
                g = p.grad
                if g is None:
                    continue
                if nan_checks_enabled() and not np.all(np.isfinite(g)):
                    raise ArithmeticError("non-finite gradient in optimizer step")
                st = self._state.get(id(p))
                if st is None:
                    st = (np.zeros_like(p.data), np.zeros_like(p.data))
                    self._state[id(p)] = st
                m, v = st
                if wd:
                    p.data *= 1.0 - lr * wd
                m *= b1
                m += (1.0 - b1) * g
                v *= b2
                v += (1.0 - b2) * (g * g)
                p.data -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    # -- checkpoint participation ---------------------------------------

    def state_arrays(self, named_params):
        """Flatten moments into name-keyed arrays for the checkpoint writer."""
        out = {"opt/step": np.array([float(self.step_count)], dtype=np.float64)}
        for name, p in named_params:
            st = self._state.get(id(p))
            if st is not None:
                out[f"opt/m/{name}"] = st[0]
                out[f"opt/v/{name}"] = st[1]
        return out

    def load_state_arrays(self, named_params, arrays):
        """Restore moments; returns the names consumed from `arrays`."""
        used = set()
        if "opt/step" in arrays:
            self.step_count = int(arrays["opt/step"][0])
            used.add("opt/step")
        for name, p in named_params:
            mk, vk = f"opt/m/{name}", f"opt/v/{name}"
            if mk in arrays:
                self._state[id(p)] = (arrays[mk].astype(p.data.dtype),
                                      arrays[vk].astype(p.data.dtype))
                used.update((mk, vk))
        return used
