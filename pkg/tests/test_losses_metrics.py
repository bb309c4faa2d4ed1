"""Weighted cross entropy and IoU metrics against hand-computed
fixtures and loop oracles."""

import numpy as np
import pytest

from bevseg import ops
from bevseg.metrics import (IoUAccumulator, iou, miou, rasterize_prediction,
                            write_report_kv, write_report_table)
from bevseg.tensor import ShapeError, Tensor


def ce_oracle(logits, target, weights):
    """Per-pixel loop: softmax, -log p[target], weighted mean."""
    c = logits.shape[0]
    flat = logits.reshape(c, -1)
    t = np.asarray(target).reshape(-1)
    num = 0.0
    den = 0.0
    for p in range(flat.shape[1]):
        z = flat[:, p] - flat[:, p].max()
        soft = np.exp(z) / np.exp(z).sum()
        num += weights[t[p]] * -np.log(soft[t[p]])
        den += weights[t[p]]
    return num / den


class TestCrossEntropy:
    def test_uniform_logits_gives_log_classes(self):
        logits = Tensor(np.zeros((4, 5, 3)))
        target = np.random.default_rng(0).integers(0, 4, (5, 3))
        for weights in ([1.0, 1.0, 1.0, 1.0], [1.0, 15.0, 15.0, 15.0]):
            loss = ops.weighted_cross_entropy(logits, target, weights)
            assert abs(loss.item() - np.log(4.0)) < 1e-12

    def test_confident_correct_logits_drive_loss_to_zero(self):
        target = np.array([[0, 1], [2, 3]])
        logits = np.full((4, 2, 2), -50.0)
        for i in range(2):
            for j in range(2):
                logits[target[i, j], i, j] = 50.0
        loss = ops.weighted_cross_entropy(Tensor(logits), target,
                                          [1.0, 15.0, 15.0, 15.0])
        assert loss.item() < 1e-6

    def test_two_pixel_hand_fixture(self):
        logits = np.array([[[1.0], [0.5]],
                           [[-0.3], [2.0]],
                           [[0.2], [-1.0]]])
        target = np.array([[2], [1]])
        weights = np.array([1.0, 3.0, 5.0])
        loss = ops.weighted_cross_entropy(Tensor(logits), target, weights)
        # pixel 0: w 5, -log softmax([1, -.3, .2])[2]
        # pixel 1: w 3, -log softmax([.5, 2, -1])[1]
        z0 = np.array([1.0, -0.3, 0.2])
        z1 = np.array([0.5, 2.0, -1.0])
        l0 = -(z0[2] - np.log(np.exp(z0).sum()))
        l1 = -(z1[1] - np.log(np.exp(z1).sum()))
        want = (5.0 * l0 + 3.0 * l1) / 8.0
        assert abs(loss.item() - want) < 1e-12
        assert abs(loss.item() - ce_oracle(logits, target, weights)) < 1e-12

    def test_matches_loop_oracle_random(self):
        rng = np.random.default_rng(3)
        logits = rng.standard_normal((5, 4, 6))
        target = rng.integers(0, 5, (4, 6))
        weights = rng.uniform(0.5, 4.0, 5)
        loss = ops.weighted_cross_entropy(Tensor(logits), target, weights)
        assert abs(loss.item() - ce_oracle(logits, target, weights)) < 1e-10

    def test_weight_scale_invariance_value_and_grad(self):
        rng = np.random.default_rng(4)
        data = rng.standard_normal((4, 3, 3))
        target = rng.integers(0, 4, (3, 3))
        base = np.array([1.0, 15.0, 15.0, 15.0])
        grads = []
        vals = []
        for scale in (1.0, 7.25):
            logits = Tensor(data.copy(), requires_grad=True)
            loss = ops.weighted_cross_entropy(logits, target, scale * base)
            loss.backward()
            vals.append(loss.item())
            grads.append(logits.grad.copy())
        assert abs(vals[0] - vals[1]) < 1e-6
        assert np.max(np.abs(grads[0] - grads[1])) < 1e-6

    def test_channel_shift_invariance(self):
        rng = np.random.default_rng(5)
        data = rng.standard_normal((4, 3, 5))
        target = rng.integers(0, 4, (3, 5))
        shift = rng.standard_normal((1, 3, 5))
        w = [1.0, 15.0, 15.0, 15.0]
        a = ops.weighted_cross_entropy(Tensor(data), target, w).item()
        b = ops.weighted_cross_entropy(Tensor(data + shift), target, w).item()
        assert abs(a - b) < 1e-6

    def test_gradient_sums_to_zero_per_pixel(self):
        # shift invariance implies the channel-sum of the gradient is 0
        rng = np.random.default_rng(6)
        logits = Tensor(rng.standard_normal((3, 2, 2)), requires_grad=True)
        target = rng.integers(0, 3, (2, 2))
        ops.weighted_cross_entropy(logits, target, [1.0, 2.0, 3.0]).backward()
        assert np.max(np.abs(logits.grad.sum(axis=0))) < 1e-12

    def test_rejects_bad_inputs(self):
        logits = Tensor(np.zeros((3, 2, 2)))
        good = np.zeros((2, 2), dtype=np.int64)
        with pytest.raises(ShapeError):
            ops.weighted_cross_entropy(logits, np.zeros((3, 2), np.int64),
                                       [1.0, 1.0, 1.0])
        with pytest.raises(ValueError):
            ops.weighted_cross_entropy(logits, good.astype(np.float64),
                                       [1.0, 1.0, 1.0])
        with pytest.raises(ValueError):
            ops.weighted_cross_entropy(logits, good + 3, [1.0, 1.0, 1.0])
        with pytest.raises(ShapeError):
            ops.weighted_cross_entropy(logits, good, [1.0, 1.0])
        with pytest.raises(ValueError):
            ops.weighted_cross_entropy(logits, good, [1.0, -1.0, 1.0])


class TestIoU:
    def test_identical_masks(self):
        gt = np.array([[0, 1], [1, 0]])
        assert iou(gt, gt, 1) == 1.0

    def test_two_of_six_overlap(self):
        # pred mask 4 px, gt mask 4 px, overlap 2 px -> 2/6
        pred = np.zeros(9, dtype=np.int64)
        gt = np.zeros(9, dtype=np.int64)
        pred[[0, 1, 2, 3]] = 1
        gt[[2, 3, 4, 5]] = 1
        got = iou(pred.reshape(3, 3), gt.reshape(3, 3), 1)
        assert abs(got - 2.0 / 6.0) < 1e-15

    def test_symmetry(self):
        rng = np.random.default_rng(7)
        a = rng.integers(0, 3, (6, 6))
        b = rng.integers(0, 3, (6, 6))
        for c in range(3):
            assert iou(a, b, c) == iou(b, a, c)

    def test_empty_mask_rules(self):
        zero = np.zeros((2, 2), dtype=np.int64)
        one = np.array([[1, 0], [0, 0]])
        assert iou(zero, zero, 1) == 1.0
        assert iou(one, zero, 1) == 0.0
        assert iou(zero, one, 1) == 0.0

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            iou(np.zeros((2, 2)), np.zeros((2, 3)), 0)

    def test_monotone_in_intersection_at_fixed_union(self):
        # union fixed at cells 0..5, intersection grows 1, 2, 3
        gt = np.zeros(9, dtype=np.int64)
        gt[[0, 1, 2]] = 1
        vals = []
        for k in (1, 2, 3):
            pred = np.zeros(9, dtype=np.int64)
            pred[[3, 4, 5]] = 1
            pred[list(range(k))] = 1
            vals.append(iou(pred, gt, 1))
        assert vals == sorted(vals)
        assert abs(vals[0] - 1.0 / 6.0) < 1e-15
        assert abs(vals[2] - 3.0 / 6.0) < 1e-15


class TestMiou:
    def test_single_class_equals_iou(self):
        rng = np.random.default_rng(8)
        a = rng.integers(0, 2, (5, 5))
        b = rng.integers(0, 2, (5, 5))
        assert miou(a, b, [1]) == iou(a, b, 1)

    def test_mean_of_point_two_and_point_four(self):
        pred = np.zeros(20, dtype=np.int64)
        gt = np.zeros(20, dtype=np.int64)
        gt[[0, 1, 2]] = 1          # class 1: inter 1, union 5 -> 0.2
        pred[[2, 3, 4]] = 1
        gt[[5, 6, 7]] = 2          # class 2: inter 2, union 5 -> 0.4
        pred[[6, 7, 8, 9]] = 2
        assert abs(miou(pred, gt, [1, 2]) - 0.3) < 1e-15

    def test_empty_class_list_rejected(self):
        acc = IoUAccumulator(3)
        with pytest.raises(ValueError):
            acc.miou([])
        with pytest.raises(ValueError):
            acc.merged_iou([])


class TestRasterize:
    def test_dominant_channel_constant(self):
        logits = np.zeros((3, 4, 4))
        logits[2] = 5.0
        assert np.array_equal(rasterize_prediction(logits),
                              np.full((4, 4), 2))

    def test_ties_go_to_lower_id(self):
        logits = np.zeros((4, 2, 2))
        logits[1] = 1.0
        logits[3] = 1.0
        assert np.array_equal(rasterize_prediction(logits),
                              np.full((2, 2), 1))

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(9)
        logits = rng.standard_normal((5, 6, 7))
        got = rasterize_prediction(Tensor(logits))
        for i in range(6):
            for j in range(7):
                best = 0
                for c in range(1, 5):
                    if logits[c, i, j] > logits[best, i, j]:
                        best = c
                assert got[i, j] == best
        assert got.dtype == np.int64


class TestAccumulator:
    def test_counts_match_pixel_fixture(self):
        acc = IoUAccumulator(2)
        pred = np.zeros(9, dtype=np.int64)
        gt = np.zeros(9, dtype=np.int64)
        pred[[0, 1, 2, 3]] = 1
        gt[[2, 3, 4, 5]] = 1
        acc.update(pred, gt)
        assert acc.counts(1) == (2, 6)
        assert abs(acc.iou(1) - 2.0 / 6.0) < 1e-15

    def test_accumulate_then_divide_differs_from_averaging(self):
        # sample A: 1 px class 1, perfect.  sample B: 9 px class 1, all missed.
        acc = IoUAccumulator(2)
        a_pred = np.array([1, 0, 0, 0, 0, 0, 0, 0, 0, 0])
        a_gt = a_pred.copy()
        b_pred = np.zeros(10, dtype=np.int64)
        b_gt = np.zeros(10, dtype=np.int64)
        b_gt[:9] = 1
        acc.update(a_pred, a_gt)
        acc.update(b_pred, b_gt)
        pooled = acc.iou(1)
        averaged = (iou(a_pred, a_gt, 1) + iou(b_pred, b_gt, 1)) / 2.0
        assert abs(pooled - 0.1) < 1e-15
        assert abs(averaged - 0.5) < 1e-15
        assert pooled != averaged

    def test_merge_equals_single_pass(self):
        rng = np.random.default_rng(10)
        frames = [(rng.integers(0, 3, 40), rng.integers(0, 3, 40))
                  for _ in range(4)]
        one = IoUAccumulator(3)
        for p, g in frames:
            one.update(p, g)
        left, right = IoUAccumulator(3), IoUAccumulator(3)
        for p, g in frames[:2]:
            left.update(p, g)
        for p, g in frames[2:]:
            right.update(p, g)
        left.merge(right)
        assert np.array_equal(left.confusion, one.confusion)

    def test_merged_iou_differs_from_mean(self):
        pred = np.zeros(20, dtype=np.int64)
        gt = np.zeros(20, dtype=np.int64)
        gt[[0, 1, 2]] = 1
        pred[[2, 3, 4, 11]] = 1    # class 1: inter 1, union 6
        gt[[5, 6, 7]] = 2
        pred[[6, 7, 8, 9]] = 2     # class 2: inter 2, union 5
        acc = IoUAccumulator(3)
        acc.update(pred, gt)
        mean = acc.miou([1, 2])
        merged = acc.merged_iou([1, 2])
        assert abs(mean - (1.0 / 6.0 + 0.4) / 2.0) < 1e-15
        # union mask: gt 6 px, pred 8 px, cross-class hits count
        assert abs(merged - 3.0 / 11.0) < 1e-15
        assert abs(mean - merged) > 1e-3

    def test_report_lists_mean_and_merged(self):
        acc = IoUAccumulator(4, ["bg", "div", "ped", "bound"])
        acc.update(np.array([0, 1, 2, 3]), np.array([0, 1, 2, 3]))
        rep = acc.report()
        for key in ("iou_bg", "iou_div", "iou_ped", "iou_bound",
                    "miou", "iou_all_mean", "iou_all_merged", "pixels"):
            assert key in rep
        assert rep["pixels"] == 4
        assert rep["iou_all_mean"] == 1.0
        assert rep["iou_all_merged"] == 1.0

    def test_absent_class_counts_as_perfect(self):
        acc = IoUAccumulator(3)
        acc.update(np.zeros(5, np.int64), np.zeros(5, np.int64))
        assert acc.iou(2) == 1.0

    def test_update_validation(self):
        acc = IoUAccumulator(3)
        with pytest.raises(ShapeError):
            acc.update(np.zeros(4, np.int64), np.zeros(5, np.int64))
        with pytest.raises(ValueError):
            acc.update(np.full(4, 3), np.zeros(4, np.int64))
        with pytest.raises(ValueError):
            acc.update(np.zeros(4, np.int64), np.full(4, -1))
        with pytest.raises(ValueError):
            IoUAccumulator(3).merge(IoUAccumulator(2))
        with pytest.raises(ValueError):
            IoUAccumulator(3, ["a", "b"])

    def test_report_files_round_trip(self, tmp_path):
        acc = IoUAccumulator(2, ["bg", "line"])
        acc.update(np.array([0, 1, 1, 0]), np.array([0, 1, 0, 0]))
        kv = tmp_path / "metrics.txt"
        table = tmp_path / "table.txt"
        write_report_kv(kv, acc.report())
        write_report_table(table, acc)
        parsed = {}
        for line in kv.read_text().splitlines():
            key, val = line.split(" = ")
            parsed[key] = val
        assert float(parsed["iou_line"]) == pytest.approx(0.5)
        lines = table.read_text().splitlines()
        assert lines[0] == "name intersection union iou"
        assert lines[2].startswith("line 1 2 ")
