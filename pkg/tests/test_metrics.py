import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semhead import metrics
from semhead.errors import LabelOutOfRange, NoGroundTruth, ShapeMismatch


def acc_for(pred, gt, num_classes):
    return metrics.accumulate_iou(
        np.asarray(pred), np.asarray(gt), metrics.IouAccumulator(num_classes)
    )


class TestIouAccumulation:
    def test_perfect_prediction(self, rng):
        gt = rng.integers(0, 3, size=(6, 6))
        acc = acc_for(gt, gt, 2)
        ious = metrics.per_class_iou(acc)
        present = np.unique(gt)
        for c in present:
            assert ious[c] == 1.0

    def test_all_background_pred(self):
        gt = np.zeros((4, 4), dtype=int)
        gt[1:3, 1:3] = 1
        acc = acc_for(np.zeros((4, 4), dtype=int), gt, 1)
        assert metrics.per_class_iou(acc)[1] == 0.0

    def test_hand_counted_fixture(self):
        # 8-pixel GT object, 6-pixel overlap, 2-pixel false positive: 6/10
        gt = np.zeros((4, 4), dtype=int)
        gt[0:2, 0:4] = 1          # 8 GT pixels
        pred = np.zeros((4, 4), dtype=int)
        pred[0:2, 0:3] = 1        # 6 overlap
        pred[3, 0:2] = 1          # 2 false positives
        acc = acc_for(pred, gt, 1)
        assert metrics.per_class_iou(acc)[1] == pytest.approx(6 / 10)

    def test_accumulation_equals_concatenated_direct(self, rng):
        grids = [
            (rng.integers(0, 4, size=(5, 5)), rng.integers(0, 4, size=(5, 5)))
            for _ in range(4)
        ]
        acc = metrics.IouAccumulator(3)
        for pred, gt in grids:
            metrics.accumulate_iou(pred, gt, acc)
        big_pred = np.concatenate([p for p, _ in grids], axis=1)
        big_gt = np.concatenate([g for _, g in grids], axis=1)
        direct = acc_for(big_pred, big_gt, 3)
        assert np.array_equal(acc.intersection, direct.intersection)
        assert np.array_equal(acc.union, direct.union)

    def test_merge_associative(self, rng):
        accs = [
            acc_for(rng.integers(0, 3, (4, 4)), rng.integers(0, 3, (4, 4)), 2)
            for _ in range(3)
        ]
        left = accs[0].merge(accs[1]).merge(accs[2])
        right = accs[0].merge(accs[1].merge(accs[2]))
        assert np.array_equal(left.intersection, right.intersection)
        assert np.array_equal(left.union, right.union)

    def test_symmetry(self, rng):
        a = rng.integers(0, 4, size=(6, 6))
        b = rng.integers(0, 4, size=(6, 6))
        fwd = metrics.per_class_iou(acc_for(a, b, 3))
        rev = metrics.per_class_iou(acc_for(b, a, 3))
        assert np.allclose(fwd, rev, equal_nan=True)

    def test_shape_and_range_checks(self):
        with pytest.raises(ShapeMismatch):
            acc_for(np.zeros((2, 2), int), np.zeros((3, 3), int), 2)
        with pytest.raises(LabelOutOfRange):
            acc_for(np.full((2, 2), 9), np.zeros((2, 2), int), 2)


class TestMiou:
    def test_mean_of_two(self):
        acc = metrics.IouAccumulator(2)
        acc.intersection[:] = [0, 4, 0]
        acc.union[:] = [0, 4, 5]
        assert metrics.miou(acc) == pytest.approx(0.5)

    def test_single_class_perfect(self):
        gt = np.ones((3, 3), dtype=int)
        assert metrics.miou(acc_for(gt, gt, 1)) == 1.0

    def test_three_class_mean(self):
        acc = metrics.IouAccumulator(3)
        acc.intersection[:] = [0, 6, 3, 9]
        acc.union[:] = [0, 10, 10, 10]
        assert metrics.miou(acc, include_background=False) == pytest.approx(0.6)

    def test_background_toggle(self):
        acc = metrics.IouAccumulator(1)
        acc.intersection[:] = [5, 1]
        acc.union[:] = [10, 2]
        assert metrics.miou(acc, include_background=True) == pytest.approx(0.5)
        assert metrics.miou(acc, include_background=False) == pytest.approx(0.5)

    def test_no_ground_truth(self):
        with pytest.raises(NoGroundTruth):
            metrics.miou(metrics.IouAccumulator(2))


class TestExtractInstances:
    def test_two_disjoint_blobs(self):
        grid = np.zeros((5, 5), dtype=int)
        grid[0, 0:2] = 2
        grid[3:5, 3:5] = 2
        inst = metrics.extract_gt_instances(grid)
        assert len(inst) == 2
        assert all(c == 2 for c, _ in inst)

    def test_empty_grid(self):
        assert metrics.extract_gt_instances(np.zeros((4, 4), dtype=int)) == []

    def test_diagonal_touch_is_two_instances(self):
        grid = np.zeros((4, 4), dtype=int)
        grid[0, 0] = 1
        grid[1, 1] = 1
        assert len(metrics.extract_gt_instances(grid)) == 2

    def test_different_classes_not_joined(self):
        grid = np.zeros((2, 2), dtype=int)
        grid[0, 0] = 1
        grid[0, 1] = 2
        inst = metrics.extract_gt_instances(grid)
        assert sorted(c for c, _ in inst) == [1, 2]

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=100, deadline=None)
    def test_matches_scipy_flood_fill_oracle(self, seed):
        from scipy import ndimage

        rng = np.random.default_rng(seed)
        grid = rng.integers(0, 3, size=(8, 8))
        ours = metrics.extract_gt_instances(grid)
        structure = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])
        expected = []
        for c in (1, 2):
            labeled, n = ndimage.label(grid == c, structure=structure)
            for i in range(1, n + 1):
                expected.append((c, labeled == i))
        assert len(ours) == len(expected)
        ours_set = {(c, m.tobytes()) for c, m in ours}
        expected_set = {(c, m.tobytes()) for c, m in expected}
        assert ours_set == expected_set


def box(y0, y1, x0, x1, size=8):
    m = np.zeros((size, size), dtype=bool)
    m[y0:y1, x0:x1] = True
    return m


class TestMap50:
    def test_single_exact_match(self):
        gt = {"a": [(1, box(0, 4, 0, 4))]}
        preds = {"a": [(1, 0.9, box(0, 4, 0, 4))]}
        per_class, value = metrics.map50(preds, gt, 1)
        assert per_class[1] == 1.0
        assert value == 1.0

    def test_no_predictions(self):
        gt = {"a": [(1, box(0, 4, 0, 4))]}
        per_class, value = metrics.map50({"a": []}, gt, 1)
        assert per_class[1] == 0.0
        assert value == 0.0

    def test_hand_computed_pr_curve(self):
        # scores 0.9 TP, 0.8 FP, 0.7 TP over 2 GT: AP = 0.8333
        gt = {"a": [(1, box(0, 4, 0, 4)), (1, box(4, 8, 4, 8))]}
        preds = {
            "a": [
                (1, 0.9, box(0, 4, 0, 4)),
                (1, 0.8, box(0, 2, 6, 8)),   # IoU with both GT < 0.5
                (1, 0.7, box(4, 8, 4, 8)),
            ]
        }
        per_class, value = metrics.map50(preds, gt, 1)
        assert per_class[1] == pytest.approx(0.8333, abs=1e-4)
        assert value == pytest.approx(0.8333, abs=1e-4)

    def test_each_gt_matched_once(self):
        gt = {"a": [(1, box(0, 4, 0, 4))]}
        preds = {
            "a": [
                (1, 0.9, box(0, 4, 0, 4)),
                (1, 0.8, box(0, 4, 0, 4)),  # duplicate: must be FP
            ]
        }
        per_class, _ = metrics.map50(preds, gt, 1)
        # precision at rank 2 is 1/2 but recall already 1 at rank 1
        assert per_class[1] == 1.0

    def test_classes_without_gt_excluded(self):
        gt = {"a": [(1, box(0, 4, 0, 4))]}
        preds = {"a": [(1, 0.9, box(0, 4, 0, 4)), (2, 0.9, box(4, 8, 4, 8))]}
        per_class, value = metrics.map50(preds, gt, 2)
        assert np.isnan(per_class[2])
        assert value == 1.0

    def test_invariant_to_monotone_score_rescaling(self, rng):
        gts = {"a": [(1, box(0, 4, 0, 4)), (1, box(4, 8, 4, 8))]}
        masks = [box(0, 4, 0, 4), box(0, 3, 0, 3), box(5, 8, 5, 8), box(4, 8, 4, 8)]
        scores = [0.9, 0.6, 0.4, 0.2]
        preds = {"a": [(1, s, m) for s, m in zip(scores, masks)]}
        _, base = metrics.map50(preds, gts, 1)
        rescaled = {"a": [(1, s**3 + 1, m) for s, m in zip(scores, masks)]}
        _, after = metrics.map50(rescaled, gts, 1)
        assert base == after

    def test_greedy_best_iou_matching(self):
        # one prediction overlapping two GTs: matches the higher-IoU one
        gt = {"a": [(1, box(0, 4, 0, 8)), (1, box(4, 8, 0, 8))]}
        pred_mask = box(1, 5, 0, 8)  # IoU 3/5 with first, 1/7 with second
        preds = {"a": [(1, 0.9, pred_mask)]}
        per_class, _ = metrics.map50(preds, gt, 1)
        # 1 TP out of 2 GT, recall 0.5, precision 1 -> AP 0.5
        assert per_class[1] == pytest.approx(0.5)


class TestEvalReport:
    def test_json_and_table_render(self):
        report = metrics.EvalReport(
            class_names=("cat", "dog"),
            per_class_iou={"background": 0.9, "cat": 0.5, "dog": None},
            miou=0.7,
            per_class_ap50={"cat": 1.0, "dog": None},
            map50=1.0,
            image_count=3,
            gt_instance_count=4,
            config_hash="abc",
        )
        payload = report.to_json()
        assert '"miou": 0.7' in payload
        table = report.to_table()
        assert "mIoU" in table and "mAP50" in table
        assert "cat" in table
