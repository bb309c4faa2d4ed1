"""Checkpoint format: bitwise round trips, corruption detection, and
model/optimizer state restoration."""

import struct

import numpy as np
import pytest

from bevseg.checkpoint import load_arrays, load_model, save_arrays, save_model
from bevseg.nn import BatchNorm2d, Linear, Module, Sequential
from bevseg.optim import AdamW
from bevseg.tensor import Tensor


def tiny_model(seed=0):
    rng = np.random.default_rng(seed)
    return Sequential(Linear(4, 8, rng), Linear(8, 3, rng))


class TestArrayRoundTrip:
    def test_bitwise_f32_and_f64(self, tmp_path):
        rng = np.random.default_rng(0)
        arrays = {
            "a/w": rng.standard_normal((3, 4)).astype(np.float32),
            "a/b": rng.standard_normal(7),
            "scalarish": np.array([3.25], dtype=np.float32),
            "empty_name_ok/deep/x": rng.standard_normal((2, 1, 3)),
        }
        path = tmp_path / "m.bevt"
        save_arrays(path, arrays)
        back = load_arrays(path)
        assert sorted(back) == sorted(arrays)
        for name, arr in arrays.items():
            assert back[name].dtype == arr.dtype
            assert back[name].shape == arr.shape
            assert np.array_equal(
                back[name].view(np.uint8), arr.view(np.uint8)), name

    def test_nan_and_inf_preserved(self, tmp_path):
        arr = np.array([np.nan, np.inf, -np.inf, 0.0], dtype=np.float32)
        path = tmp_path / "n.bevt"
        save_arrays(path, {"x": arr})
        back = load_arrays(path)["x"]
        assert np.array_equal(back.view(np.uint32), arr.view(np.uint32))

    def test_zero_dim_array(self, tmp_path):
        path = tmp_path / "z.bevt"
        save_arrays(path, {"s": np.asarray(2.5)})
        back = load_arrays(path)["s"]
        assert back.shape == ()
        assert back == 2.5

    def test_unsupported_dtype_rejected(self, tmp_path):
        with pytest.raises(TypeError):
            save_arrays(tmp_path / "i.bevt", {"x": np.arange(3)})


class TestCorruption:
    def make(self, tmp_path):
        path = tmp_path / "ok.bevt"
        save_arrays(path, {"w": np.ones((2, 2), dtype=np.float32)})
        return path

    def test_bad_magic(self, tmp_path):
        path = self.make(tmp_path)
        raw = bytearray(path.read_bytes())
        raw[:4] = b"JUNK"
        path.write_bytes(bytes(raw))
        with pytest.raises(ValueError, match="not a checkpoint"):
            load_arrays(path)

    def test_bad_version(self, tmp_path):
        path = self.make(tmp_path)
        raw = bytearray(path.read_bytes())
        raw[4:8] = struct.pack("<I", 99)
        path.write_bytes(bytes(raw))
        with pytest.raises(ValueError, match="version"):
            load_arrays(path)

    def test_truncation_anywhere(self, tmp_path):
        path = self.make(tmp_path)
        raw = path.read_bytes()
        for cut in (2, 6, 10, 14, 20, len(raw) - 1):
            path.write_bytes(raw[:cut])
            with pytest.raises(ValueError, match="truncated"):
                load_arrays(path)

    def test_bad_dtype_tag(self, tmp_path):
        path = self.make(tmp_path)
        raw = bytearray(path.read_bytes())
        # tag byte sits after magic+header+name length+name
        raw[4 + 4 + 4 + 4 + 1] = 7
        path.write_bytes(bytes(raw))
        with pytest.raises(ValueError, match="dtype tag"):
            load_arrays(path)


class TestModelRoundTrip:
    def test_parameters_restored_bitwise(self, tmp_path):
        model = tiny_model(0)
        path = tmp_path / "m.bevt"
        save_model(path, model)
        other = tiny_model(1)
        before = {n: p.data.copy() for n, p in other.named_parameters()}
        extras = load_model(path, other)
        assert extras == {}
        for (name, p), (_, q) in zip(model.named_parameters(),
                                     other.named_parameters()):
            assert np.array_equal(p.data, q.data), name
        assert any(not np.array_equal(before[n], p.data)
                   for n, p in other.named_parameters())

    def test_buffers_restored(self, tmp_path):
        rng = np.random.default_rng(2)
        bn = BatchNorm2d(3)
        bn.running_mean.data = rng.standard_normal(3).astype(np.float32)
        bn.running_var.data = rng.uniform(0.5, 2.0, 3).astype(np.float32)
        path = tmp_path / "bn.bevt"
        save_model(path, bn)
        fresh = BatchNorm2d(3)
        load_model(path, fresh)
        assert np.array_equal(fresh.running_mean.data, bn.running_mean.data)
        assert np.array_equal(fresh.running_var.data, bn.running_var.data)

    def test_strict_missing_parameter(self, tmp_path):
        model = tiny_model(0)
        path = tmp_path / "m.bevt"
        save_model(path, model)
        arrays = load_arrays(path)
        some = sorted(arrays)[0]
        del arrays[some]
        save_arrays(path, arrays)
        with pytest.raises(ValueError, match="missing parameter"):
            load_model(path, tiny_model(1))
        load_model(path, tiny_model(1), strict=False)  # tolerated

    def test_shape_mismatch_rejected_even_lenient(self, tmp_path):
        model = tiny_model(0)
        path = tmp_path / "m.bevt"
        save_model(path, model)
        rng = np.random.default_rng(3)
        wider = Sequential(Linear(4, 9, rng), Linear(9, 3, rng))
        with pytest.raises(ValueError, match="shape"):
            load_model(path, wider, strict=False)

    def test_extra_arrays_returned(self, tmp_path):
        model = tiny_model(0)
        path = tmp_path / "m.bevt"
        save_model(path, model, extra={"train/step": np.array([42.0])})
        extras = load_model(path, tiny_model(1))
        assert list(extras) == ["train/step"]
        assert extras["train/step"][0] == 42.0


class TestOptimizerRoundTrip:
    def test_resumed_optimizer_matches_straight_run(self, tmp_path):
        rng = np.random.default_rng(4)
        model = tiny_model(5)
        params = [p for _, p in model.named_parameters()]
        opt = AdamW([{"params": params, "lr": 0.01, "weight_decay": 0.1}])
        grads = [[rng.standard_normal(p.data.shape).astype(p.data.dtype)
                  for p in params] for _ in range(6)]

        def apply(o, ps, gs):
            for p, g in zip(ps, gs):
                p.grad = g.copy()
            o.step()

        for gs in grads[:3]:
            apply(opt, params, gs)
        path = tmp_path / "mid.bevt"
        save_model(path, model, optimizer=opt)

        model2 = tiny_model(6)
        params2 = [p for _, p in model2.named_parameters()]
        opt2 = AdamW([{"params": params2, "lr": 0.01, "weight_decay": 0.1}])
        extras = load_model(path, model2, optimizer=opt2)
        assert extras == {}
        assert opt2.step_count == 3
        for gs in grads[3:]:
            apply(opt, params, gs)
            apply(opt2, params2, gs)
        for p, q in zip(params, params2):
            assert np.array_equal(p.data, q.data)

    def test_fresh_optimizer_state_when_absent(self, tmp_path):
        model = tiny_model(0)
        path = tmp_path / "m.bevt"
        save_model(path, model)  # no optimizer section
        model2 = tiny_model(1)
        params2 = [p for _, p in model2.named_parameters()]
        opt2 = AdamW([{"params": params2, "lr": 0.01}])
        load_model(path, model2, optimizer=opt2)
        assert opt2.step_count == 0
        assert opt2._state == {}
