"""AdamW against a closed-form single-step oracle, decoupled decay,
parameter groups, and moment-state round trips."""

import numpy as np
import pytest

from bevseg.optim import AdamW
from bevseg.tensor import Tensor, set_nan_checks


def adamw_oracle(x0, grads, lr, wd, betas=(0.9, 0.999), eps=1e-8):
    """Reference update loop in float64."""
    b1, b2 = betas
    x = x0.astype(np.float64).copy()
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    for t, g in enumerate(grads, start=1):
        g = g.astype(np.float64)
        x *= 1.0 - lr * wd
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mhat = m / (1 - b1 ** t)
        vhat = v / (1 - b2 ** t)
        x -= lr * mhat / (np.sqrt(vhat) + eps)
    return x


class TestStepMath:
    def test_first_step_closed_form(self):
        # with m = (1-b1)g and v = (1-b2)g^2, bias correction makes the
        # first no-decay step exactly -lr * g / (|g| + eps)
        g = np.array([0.5, -2.0, 1e-3])
        p = Tensor(np.zeros(3), requires_grad=True)
        p.grad = g.copy()
        opt = AdamW([{"params": [p], "lr": 0.1, "weight_decay": 0.0}])
        opt.step()
        want = -0.1 * g / (np.abs(g) + 1e-8)
        assert np.max(np.abs(p.data - want)) < 1e-12

    def test_multi_step_matches_oracle(self):
        rng = np.random.default_rng(0)
        x0 = rng.standard_normal(7)
        grads = [rng.standard_normal(7) for _ in range(5)]
        p = Tensor(x0.copy(), requires_grad=True)
        opt = AdamW([{"params": [p], "lr": 0.05, "weight_decay": 0.02}])
        for g in grads:
            p.grad = g.copy()
            opt.step()
        want = adamw_oracle(x0, grads, 0.05, 0.02)
        assert np.max(np.abs(p.data - want)) < 1e-12

    def test_decay_is_decoupled(self):
        # zero gradient: moments stay zero, only the decay shrink applies
        p = Tensor(np.array([4.0]), requires_grad=True)
        opt = AdamW([{"params": [p], "lr": 0.1, "weight_decay": 0.5}])
        p.grad = np.zeros(1)
        opt.step()
        assert abs(p.data[0] - 4.0 * (1.0 - 0.1 * 0.5)) < 1e-12
        m, v = opt._state[id(p)]
        assert np.all(m == 0.0) and np.all(v == 0.0)

    def test_none_grad_skipped_entirely(self):
        p = Tensor(np.array([3.0]), requires_grad=True)
        q = Tensor(np.array([3.0]), requires_grad=True)
        opt = AdamW([{"params": [p, q], "lr": 0.1, "weight_decay": 0.5}])
        q.grad = np.ones(1)
        opt.step()
        assert p.data[0] == 3.0  # no decay without a gradient
        assert q.data[0] != 3.0

    def test_zero_grad_clears(self):
        p = Tensor(np.array([1.0]), requires_grad=True)
        p.grad = np.ones(1)
        opt = AdamW([{"params": [p], "lr": 0.1}])
        opt.zero_grad()
        assert p.grad is None

    def test_nonfinite_gradient_raises(self):
        p = Tensor(np.array([1.0]), requires_grad=True)
        p.grad = np.array([np.nan])
        opt = AdamW([{"params": [p], "lr": 0.1}])
        set_nan_checks(True)
        with pytest.raises(ArithmeticError):
            opt.step()


class TestGroups:
    def test_groups_use_their_own_lr_and_decay(self):
        a = Tensor(np.array([1.0]), requires_grad=True)
        b = Tensor(np.array([1.0]), requires_grad=True)
        opt = AdamW([
            {"params": [a], "lr": 0.1, "weight_decay": 0.0},
            {"params": [b], "lr": 0.001, "weight_decay": 0.0},
        ])
        a.grad = np.ones(1)
        b.grad = np.ones(1)
        opt.step()
        da, db = 1.0 - a.data[0], 1.0 - b.data[0]
        assert abs(da - 0.1 * 1.0 / (1.0 + 1e-8)) < 1e-10
        assert abs(db - 0.001 * 1.0 / (1.0 + 1e-8)) < 1e-10

    def test_lr_mutable_between_steps(self):
        p = Tensor(np.zeros(1), requires_grad=True)
        opt = AdamW([{"params": [p], "lr": 1.0, "weight_decay": 0.0}])
        p.grad = np.ones(1)
        opt.step()
        first = p.data.copy()
        opt.groups[0]["lr"] = 0.0
        p.grad = np.ones(1)
        opt.step()
        assert np.array_equal(p.data, first)


class TestStateRoundTrip:
    def test_moments_survive_save_load(self):
        rng = np.random.default_rng(1)
        x0 = rng.standard_normal(4)
        grads = [rng.standard_normal(4) for _ in range(6)]

        p = Tensor(x0.copy(), requires_grad=True)
        opt = AdamW([{"params": [p], "lr": 0.05, "weight_decay": 0.01}])
        for g in grads[:3]:
            p.grad = g.copy()
            opt.step()
        named = [("w", p)]
        arrays = opt.state_arrays(named)
        assert set(arrays) == {"opt/step", "opt/m/w", "opt/v/w"}

        q = Tensor(p.data.copy(), requires_grad=True)
        opt2 = AdamW([{"params": [q], "lr": 0.05, "weight_decay": 0.01}])
        used = opt2.load_state_arrays([("w", q)], arrays)
        assert used == {"opt/step", "opt/m/w", "opt/v/w"}
        assert opt2.step_count == 3

        for g in grads[3:]:
            p.grad = g.copy()
            opt.step()
            q.grad = g.copy()
            opt2.step()
        assert np.array_equal(p.data, q.data)

    def test_resumed_run_matches_straight_run(self):
        rng = np.random.default_rng(2)
        x0 = rng.standard_normal(5)
        grads = [rng.standard_normal(5) for _ in range(6)]
        p = Tensor(x0.copy(), requires_grad=True)
        opt = AdamW([{"params": [p], "lr": 0.1, "weight_decay": 0.02}])
        for g in grads:
            p.grad = g.copy()
            opt.step()
        want = adamw_oracle(x0, grads, 0.1, 0.02)
        assert np.max(np.abs(p.data - want)) < 1e-12
