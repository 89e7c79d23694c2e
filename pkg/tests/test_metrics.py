import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from swu import (
    BinaryMask,
    FrocEntry,
    Method,
    Orientation,
    ScoredMatch,
    Structure,
    average_recall,
    dice_coefficient,
    evaluate,
    fp_reduction,
    froc_curve,
    froc_from_entries,
    match_structures,
    spearman_abs,
)

from oracles import (
    TOY_AVERAGE_RECALL,
    TOY_ENTRIES,
    TOY_FP_REDUCTION,
    TOY_N_CASES,
    TOY_N_GT,
    average_ranks,
    pearson,
)


def _mask(data):
    data = np.asarray(data, np.uint8)
    return BinaryMask(data.shape, (1.0, 1.0, 1.0), data)


def _line_structure(label, zs):
    return Structure.from_voxels(label, np.array([[z, 0, 0] for z in zs]))


class TestDice:
    def test_conventions(self):
        a = np.zeros((1, 1, 4))
        b = np.zeros((1, 1, 4))
        a[0, 0, :2] = 1
        b[0, 0, 1:3] = 1
        assert dice_coefficient(_mask(a), _mask(b)) == 0.5
        assert dice_coefficient(_mask(a), _mask(a)) == 1.0
        assert dice_coefficient(_mask(a), _mask(np.zeros((1, 1, 4)))) == 0.0
        empty = _mask(np.zeros((1, 1, 4)))
        assert dice_coefficient(empty, empty) == 1.0

    def test_grid_mismatch(self):
        with pytest.raises(ValueError, match="grid mismatch"):
            dice_coefficient(_mask(np.zeros((1, 1, 2))),
                             _mask(np.zeros((1, 2, 1))))

    def test_accepts_plain_arrays(self):
        a = np.array([[[1, 0]]], np.uint8)
        assert dice_coefficient(a, a) == 1.0


def _labels_to_structures(labels):
    out = []
    for lab in np.unique(labels):
        if lab == 0:
            continue
        out.append(Structure.from_voxels(int(lab), np.argwhere(labels == lab)))
    return out


class TestMatching:
    def test_basic_tp_fp_split(self):
        gt = np.zeros((1, 1, 10), np.int32)
        gt[0, 0, 0:3] = 1
        pred = np.zeros((1, 1, 10), np.int32)
        pred[0, 0, 1:4] = 1  # overlaps gt 1
        pred[0, 0, 7:9] = 2  # touches nothing
        result = match_structures(_labels_to_structures(pred),
                                  _labels_to_structures(gt), min_iou=0.0)
        by = result.by_pred_label()
        assert by[1].is_tp and by[1].matched_gt_label == 1
        assert by[1].dice == 2 * 2 / (3 + 3)
        assert not by[2].is_tp and by[2].dice == 0.0
        assert result.detected_by == {1: {1}}
        assert (result.n_tp, result.n_fp, result.n_detected) == (1, 1, 1)

    def test_iou_tie_goes_to_lower_gt_label(self):
        gt = np.zeros((1, 1, 10), np.int32)
        gt[0, 0, 0:2] = 1
        gt[0, 0, 4:6] = 2
        pred = np.zeros((1, 1, 10), np.int32)
        pred[0, 0, 1] = 1
        pred[0, 0, 4] = 1  # pred 1 overlaps both gts with equal IoU
        pred[0, 0, 0] = 0
        result = match_structures(_labels_to_structures(pred),
                                  _labels_to_structures(gt))
        match = result.by_pred_label()[1]
        assert match.is_tp and match.matched_gt_label == 1

    def test_min_iou_boundary_is_strict(self):
        gt = np.zeros((1, 1, 4), np.int32)
        gt[0, 0, 0:2] = 1
        pred = np.zeros((1, 1, 4), np.int32)
        pred[0, 0, 1:3] = 1  # IoU = 1/3
        structures = _labels_to_structures(pred)
        gts = _labels_to_structures(gt)
        at = match_structures(structures, gts, min_iou=1 / 3)
        assert not at.matches[0].is_tp  # needs strictly greater
        below = match_structures(structures, gts, min_iou=1 / 3 - 1e-9)
        assert below.matches[0].is_tp

    def test_two_preds_may_share_one_gt(self):
        gt = np.zeros((1, 1, 10), np.int32)
        gt[0, 0, 0:6] = 1
        pred = np.zeros((1, 1, 10), np.int32)
        pred[0, 0, 0:2] = 1
        pred[0, 0, 4:6] = 2
        result = match_structures(_labels_to_structures(pred),
                                  _labels_to_structures(gt))
        assert result.n_tp == 2
        assert result.detected_by == {1: {1, 2}}
        assert result.n_detected == 1  # one gt found, twice

    def test_no_gt_means_all_fp(self):
        pred = np.zeros((1, 1, 4), np.int32)
        pred[0, 0, 0] = 1
        result = match_structures(_labels_to_structures(pred), [])
        assert result.n_tp == 0 and result.n_fp == 1 and result.n_gt == 0


class TestFrocCurve:
    def test_toy_staircase_frozen_values(self):
        entries = [FrocEntry(s, tp, ref) for s, tp, ref in TOY_ENTRIES]
        curve = froc_from_entries(entries, TOY_N_CASES, TOY_N_GT,
                                  Orientation.CONFIDENCE)
        # strictest first: one point per unique score
        assert [p.threshold for p in curve.points] == \
            [0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3]
        np.testing.assert_allclose([p.recall for p in curve.points],
                                   [0.25, 0.25, 0.5, 0.5, 0.5, 0.75, 0.75])
        np.testing.assert_allclose(
            [p.avg_fp_per_case for p in curve.points],
            [0.0, 0.2, 0.2, 0.4, 0.6, 0.6, 0.8])
        assert fp_reduction(curve) == TOY_FP_REDUCTION
        np.testing.assert_allclose(fp_reduction(curve), 0.25, atol=1e-15)
        np.testing.assert_allclose(average_recall(curve),
                                   TOY_AVERAGE_RECALL, atol=1e-9)

    def test_uncertainty_orientation_sweeps_ascending(self):
        entries = [FrocEntry(0.1, True, ("c", 1)), FrocEntry(0.9, False, None)]
        curve = froc_from_entries(entries, 1, 1, Orientation.UNCERTAINTY)
        assert [p.threshold for p in curve.points] == [0.1, 0.9]
        assert [p.recall for p in curve.points] == [1.0, 1.0]
        assert [p.avg_fp_per_case for p in curve.points] == [0.0, 1.0]

    def test_ties_fold_into_one_point(self):
        entries = [FrocEntry(0.5, True, ("c", 1)), FrocEntry(0.5, False, None),
                   FrocEntry(0.5, False, None)]
        curve = froc_from_entries(entries, 2, 1, Orientation.CONFIDENCE)
        assert len(curve.points) == 1
        assert curve.points[0].recall == 1.0
        assert curve.points[0].avg_fp_per_case == 1.0

    def test_duplicate_gt_hits_count_once_for_recall(self):
        entries = [FrocEntry(0.9, True, ("c", 1)), FrocEntry(0.8, True, ("c", 1))]
        curve = froc_from_entries(entries, 1, 2, Orientation.CONFIDENCE)
        assert [p.recall for p in curve.points] == [0.5, 0.5]

    def test_errors(self):
        with pytest.raises(ValueError, match="no structures"):
            froc_from_entries([], 1, 1, Orientation.CONFIDENCE)
        with pytest.raises(ValueError, match="non-finite"):
            froc_from_entries([FrocEntry(float("nan"), False, None)],
                              1, 1, Orientation.CONFIDENCE)
        with pytest.raises(ValueError, match="gt reference"):
            froc_from_entries([FrocEntry(0.5, True, None)],
                              1, 1, Orientation.CONFIDENCE)

    @given(st.integers(0, 2 ** 32 - 1))
    def test_monotone_and_exhaustive(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 40))
        scores = rng.choice(rng.random(max(1, n // 2)), n)  # force ties
        is_tp = rng.random(n) < 0.5
        n_gt = int(is_tp.sum()) + int(rng.integers(0, 3))
        entries = []
        for i in range(n):
            ref = ("c", i) if is_tp[i] else None
            entries.append(FrocEntry(float(scores[i]), bool(is_tp[i]), ref))
        curve = froc_from_entries(entries, 3, max(n_gt, 1),
                                  Orientation.CONFIDENCE)
        recalls = [p.recall for p in curve.points]
        fps = [p.avg_fp_per_case for p in curve.points]
        # strict-to-loose sweep can only add detections and false positives
        assert all(a <= b + 1e-15 for a, b in zip(recalls, recalls[1:]))
        assert all(a <= b + 1e-15 for a, b in zip(fps, fps[1:]))
        # the loosest point admits everything
        expected_fp = sum(1 for e in entries if not e.is_tp) / 3
        found = {e.gt_ref for e in entries if e.is_tp}
        np.testing.assert_allclose(curve.points[-1].avg_fp_per_case,
                                   expected_fp, atol=1e-12)
        np.testing.assert_allclose(curve.points[-1].recall,
                                   len(found) / max(n_gt, 1), atol=1e-12)
        assert len({p.threshold for p in curve.points}) == len(curve.points)


class TestRankInvariance:
    @given(st.integers(0, 2 ** 32 - 1))
    def test_strictly_increasing_transforms_preserve_the_curve(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 30))
        scores = rng.random(n)
        is_tp = rng.random(n) < 0.5
        entries, transformed = [], []
        for i in range(n):
            ref = ("c", i) if is_tp[i] else None
            entries.append(FrocEntry(float(scores[i]), bool(is_tp[i]), ref))
            transformed.append(FrocEntry(float(np.exp(3 * scores[i]) + 7),
                                         bool(is_tp[i]), ref))
        n_gt = max(int(is_tp.sum()), 1)
        a = froc_from_entries(entries, 2, n_gt, Orientation.CONFIDENCE)
        b = froc_from_entries(transformed, 2, n_gt, Orientation.CONFIDENCE)
        assert [(p.recall, p.avg_fp_per_case) for p in a.points] == \
            [(p.recall, p.avg_fp_per_case) for p in b.points]
        try:
            assert fp_reduction(a) == fp_reduction(b)
        except ValueError:
            with pytest.raises(ValueError):
                fp_reduction(b)
        if len(a.points) >= 2:
            assert average_recall(a) == average_recall(b)


class TestFpReduction:
    def test_no_false_positives_is_an_error(self):
        curve = froc_from_entries([FrocEntry(0.9, True, ("c", 1))],
                                  1, 1, Orientation.CONFIDENCE)
        with pytest.raises(ValueError, match="no false positives"):
            fp_reduction(curve)

    def test_constant_scores_give_zero(self):
        entries = [FrocEntry(0.5, True, ("c", 1)), FrocEntry(0.5, False, None)]
        curve = froc_from_entries(entries, 1, 1, Orientation.CONFIDENCE)
        assert fp_reduction(curve) == 0.0

    def test_perfect_separation_gives_one(self):
        entries = [FrocEntry(0.9, True, ("c", 1)), FrocEntry(0.1, False, None)]
        curve = froc_from_entries(entries, 1, 1, Orientation.CONFIDENCE)
        assert fp_reduction(curve) == 1.0


class TestAverageRecall:
    def test_needs_two_points(self):
        curve = froc_from_entries([FrocEntry(0.9, True, ("c", 1))],
                                  1, 1, Orientation.CONFIDENCE)
        with pytest.raises(ValueError, match="two sweep points"):
            average_recall(curve)


class TestSpearman:
    def test_tie_toy_frozen_value(self):
        x = np.array([1.0, 2.0, 3.0])
        y = np.array([0.1, 0.4, 0.4])
        np.testing.assert_allclose(spearman_abs(x, y),
                                   np.sqrt(3) / 2, atol=1e-12)
        np.testing.assert_allclose(spearman_abs(x, y),
                                   0.8660254037844386, atol=1e-15)

    def test_sign_is_dropped(self):
        x = np.array([1.0, 2.0, 3.0, 4.0])
        assert spearman_abs(x, -x) == 1.0
        assert spearman_abs(x, x) == 1.0

    def test_errors(self):
        with pytest.raises(ValueError, match="at least two"):
            spearman_abs(np.array([1.0]), np.array([2.0]))
        with pytest.raises(ValueError, match="constant"):
            spearman_abs(np.array([1.0, 1.0]), np.array([1.0, 2.0]))

    @given(st.integers(0, 2 ** 32 - 1))
    def test_matches_brute_force_rank_oracle(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(3, 25))
        x = rng.choice(rng.random(max(2, n // 2)), n)
        y = rng.choice(rng.random(max(2, n // 2)), n)
        if len(set(x)) < 2 or len(set(y)) < 2:
            return
        expected = abs(pearson(average_ranks(x), average_ranks(y)))
        np.testing.assert_allclose(spearman_abs(x, y), expected, atol=1e-12)


def _record(case_id, label, is_tp, dice, score, method="ens:entropy:mean",
            basis="ens"):
    ref = (case_id, label) if is_tp else None
    return ScoredMatch(case_id, basis, label, is_tp, dice, ref,
                       {method: score})


class TestEvaluate:
    def test_reports_wire_everything_through(self):
        method = Method.parse("ens:entropy:mean")
        records = [
            _record("c1", 1, True, 0.9, 0.05),
            _record("c1", 2, False, 0.0, 0.80),
            _record("c2", 1, True, 0.8, 0.10),
            _record("c2", 2, False, 0.0, 0.90),
        ]
        reports = evaluate(records, [method], n_cases=2, n_gt=2,
                           dataset_id="toy")
        r = reports["ens:entropy:mean"]
        assert r.orientation == "uncertainty"
        assert (r.n_structures, r.n_tp, r.n_fp) == (4, 2, 2)
        assert r.fp_reduction == 1.0  # uncertainty splits tps from fps cleanly
        assert r.spearman_tp is not None
        d = r.to_dict()
        assert d["method"] == "ens:entropy:mean"
        assert d["dataset"] == "toy"
        assert d["fp_reduction"] == 1.0

    def test_missing_method_column_is_an_error(self):
        records = [_record("c1", 1, True, 0.9, 0.05)]
        with pytest.raises(ValueError, match="no structures scored"):
            evaluate(records, [Method.parse("ens:pd")], 1, 1, "toy")

    def test_degenerate_metrics_become_none(self):
        # all TPs, no FPs: fp_reduction undefined; single TP: spearman undefined
        records = [_record("c1", 1, True, 0.9, 0.05)]
        reports = evaluate(records, [Method.parse("ens:entropy:mean")],
                           1, 1, "toy")
        r = reports["ens:entropy:mean"]
        assert r.fp_reduction is None
        assert r.average_recall is None
        assert r.spearman_tp is None

    def test_tp_spearman_ignores_appended_fp_only_cases(self):
        method = Method.parse("ens:entropy:mean")
        base = [
            _record("c1", 1, True, 0.9, 0.05),
            _record("c1", 2, True, 0.6, 0.30),
            _record("c2", 1, True, 0.8, 0.10),
            _record("c2", 2, False, 0.0, 0.70),
        ]
        extra = [
            _record("x1", 1, False, 0.0, 0.40),
            _record("x2", 1, False, 0.0, 0.95),
        ]
        before = evaluate(base, [method], 2, 3, "id")["ens:entropy:mean"]
        after = evaluate(base + extra, [method], 4, 3,
                         "combined")["ens:entropy:mean"]
        assert before.spearman_tp == after.spearman_tp
        assert before.spearman_all != after.spearman_all
