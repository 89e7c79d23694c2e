import json
from dataclasses import replace

import numpy as np
import pytest
from scipy.stats import spearmanr

from swu import (
    Method,
    SynthConfig,
    binarize,
    connected_components,
    dice_coefficient,
    generate_case,
    generate_dataset,
    load_case,
    load_manifest,
    match_structures,
    mean_prediction,
    mutual_information_map,
    ood_companion,
    pairwise_dice_score,
    score_structures,
    variance_map,
)

SMALL = SynthConfig(shape=(32, 48, 48), n_cases=2, n_members=3,
                    blobs_per_case=(1, 2), radius_range=(2.5, 4.0),
                    fp_rate=1.0, seed=11)


class TestConfig:
    def test_validation(self):
        with pytest.raises(ValueError, match="members"):
            replace(SMALL, n_members=1)
        with pytest.raises(ValueError, match="semi-axes"):
            replace(SMALL, radius_range=(0.5, 4.0))
        with pytest.raises(ValueError, match="too small"):
            replace(SMALL, shape=(6, 6, 6), radius_range=(5.0, 8.0))
        with pytest.raises(ValueError, match="blobs_per_case"):
            replace(SMALL, blobs_per_case=(3, 2))


class TestGenerateCase:
    def test_same_seed_is_bitwise_identical(self):
        a = generate_case(SMALL, 0)
        b = generate_case(SMALL, 0)
        assert a.case.case_id == b.case.case_id
        for ma, mb in zip(a.case.members, b.case.members):
            np.testing.assert_array_equal(ma.data, mb.data)
        np.testing.assert_array_equal(a.case.ground_truth.data,
                                      b.case.ground_truth.data)
        assert [blob.to_record() for blob in a.blobs] == \
            [blob.to_record() for blob in b.blobs]

    def test_different_index_differs(self):
        a = generate_case(SMALL, 0)
        b = generate_case(SMALL, 1)
        assert any(not np.array_equal(ma.data, mb.data)
                   for ma, mb in zip(a.case.members, b.case.members))

    def test_zero_disagreement_limit(self):
        config = replace(SMALL, tp_noise=0.0, fp_rate=0.0)
        synth = generate_case(config, 0)
        first = synth.case.members[0].data
        for member in synth.case.members[1:]:
            np.testing.assert_array_equal(member.data, first)
        mi = mutual_information_map(synth.case)
        var = variance_map(synth.case)
        assert not mi.data.any()  # exactly zero everywhere
        assert not var.data.any()
        for s in connected_components(binarize(mean_prediction(synth.case), 0.5)):
            assert pairwise_dice_score(synth.case, s, 0.5) == 1.0

    def test_zero_noise_agreeing_fps_stay_bitwise_equal(self):
        config = replace(SMALL, tp_noise=0.0, fp_rate=3.0, fp_mode="agreeing",
                         blobs_per_case=(1, 1))
        synth = generate_case(config, 3)
        assert synth.fp_blobs  # seed chosen so FPs actually appear
        first = synth.case.members[0].data
        for member in synth.case.members[1:]:
            np.testing.assert_array_equal(member.data, first)

    def test_gt_is_union_of_tp_ellipsoids(self):
        synth = generate_case(SMALL, 1)
        gt = synth.case.ground_truth.data.astype(bool)
        expected = np.zeros(SMALL.shape, bool)
        for blob in synth.tp_blobs:
            grid = np.indices(SMALL.shape, dtype=np.float64)
            rho2 = sum(((grid[d] - blob.center[d]) / blob.semi_axes[d]) ** 2
                       for d in range(3))
            expected |= rho2 <= 1.0
        np.testing.assert_array_equal(gt, expected)
        components = connected_components(synth.case.ground_truth)
        assert len(components) == len(synth.tp_blobs)

    def test_fp_blobs_never_touch_gt(self):
        synth = generate_case(replace(SMALL, fp_rate=2.5), 2)
        gt = synth.case.ground_truth.data.astype(bool)
        for blob in synth.fp_blobs:
            center = tuple(int(round(c)) for c in blob.center)
            assert not gt[center]

    def test_agreeing_fp_lands_in_mean_prediction_with_low_mi(self):
        config = replace(SMALL, blobs_per_case=(1, 1), fp_rate=2.0,
                         fp_mode="agreeing", tp_noise=0.0, seed=5)
        synth = None
        for index in range(10):
            candidate = generate_case(config, index)
            if candidate.fp_blobs:
                synth = candidate
                break
        assert synth is not None
        mean = mean_prediction(synth.case)
        structures = connected_components(binarize(mean, 0.5))
        gt_structures = connected_components(synth.case.ground_truth)
        result = match_structures(structures, gt_structures)
        fp_labels = [m.pred_label for m in result.matches if not m.is_tp]
        assert fp_labels  # the agreeing FP blob shows up as a structure
        mi = mutual_information_map(synth.case)
        by_label = {s.label: s for s in structures}
        for label in fp_labels:
            voxels = by_label[label].voxels
            assert float(mi.data[tuple(voxels.T)].max()) < 1e-12

    def test_discrepant_fps_split_the_members(self):
        config = replace(SMALL, blobs_per_case=(0, 0), fp_rate=3.0,
                         fp_mode="discrepant")
        synth = generate_case(config, 0)
        assert synth.fp_blobs
        for blob in synth.fp_blobs:
            members = set(blob.members)
            assert len(members) >= config.n_members // 2 + 1
            assert len(members) < config.n_members
            assert members <= set(range(config.n_members))

    def test_ledger_blobs_map_to_components(self):
        synth = generate_case(SMALL, 4)
        mean = mean_prediction(synth.case)
        structures = connected_components(binarize(mean, 0.5))
        # every TP blob center sits inside exactly one structure
        occupied = set()
        for blob in synth.tp_blobs:
            center = tuple(int(round(c)) for c in blob.center)
            hits = [s.label for s in structures
                    if bool((s.voxels == center).all(axis=1).any())]
            assert len(hits) == 1
            assert hits[0] not in occupied
            occupied.add(hits[0])

    def test_placement_exhaustion_is_diagnosed(self):
        config = SynthConfig(shape=(24, 24, 24), n_cases=1, n_members=2,
                             blobs_per_case=(30, 30), radius_range=(4.0, 6.0),
                             seed=0)
        with pytest.raises(RuntimeError, match="could not place blob"):
            generate_case(config, 0)


class TestCorruptionLink:
    def test_corruption_tracks_dice_inversely(self):
        config = SynthConfig(shape=(32, 48, 48), n_cases=1, n_members=4,
                             blobs_per_case=(2, 3), radius_range=(3.0, 5.0),
                             fp_rate=0.0, fp_quality_link=1.0, seed=21)
        corruption, dice = [], []
        for index in range(12):
            synth = generate_case(config, index)
            mean = mean_prediction(synth.case)
            structures = connected_components(binarize(mean, 0.5))
            gt_structures = connected_components(synth.case.ground_truth)
            result = match_structures(structures, gt_structures)
            matched = {m.matched_gt_label: m.dice
                       for m in result.matches if m.is_tp}
            gt_by_label = {g.label: g for g in gt_structures}
            for blob in synth.tp_blobs:
                center = tuple(int(round(c)) for c in blob.center)
                for label, g in gt_by_label.items():
                    if bool((g.voxels == center).all(axis=1).any()):
                        if label in matched:
                            corruption.append(blob.corruption)
                            dice.append(matched[label])
                        break
        assert len(corruption) >= 20
        rho = spearmanr(corruption, dice).statistic
        assert rho <= -0.8

    def test_discrepant_fps_carry_more_variance_than_agreeing(self):
        base = SynthConfig(shape=(32, 48, 48), n_cases=1, n_members=5,
                           blobs_per_case=(0, 0), fp_rate=1.5, seed=33)
        wins = total = 0
        for seed in range(20):
            means = {}
            for mode in ("agreeing", "discrepant"):
                config = replace(base, fp_mode=mode, seed=seed)
                values = []
                for index in range(3):
                    try:
                        synth = generate_case(config, index)
                    except RuntimeError:
                        continue  # an over-crowded draw; skip, keep power
                    var = variance_map(synth.case).data
                    for blob in synth.fp_blobs:
                        center = tuple(int(round(c)) for c in blob.center)
                        lo = [max(0, c - 2) for c in center]
                        hi = [c + 3 for c in center]
                        region = var[lo[0]:hi[0], lo[1]:hi[1], lo[2]:hi[2]]
                        values.append(float(region.mean()))
                if values:
                    means[mode] = float(np.mean(values))
            if len(means) == 2:
                total += 1
                wins += means["discrepant"] > means["agreeing"]
        assert total >= 15
        assert wins == total


class TestGenerateDataset:
    def test_layout_and_round_trip(self, tmp_path):
        out = tmp_path / "data"
        returned = generate_dataset(SMALL, out)
        manifests = load_manifest(out / "manifest.json")
        assert [m.case_id for m in manifests] == [m.case_id for m in returned]
        assert len(manifests) == SMALL.n_cases
        for m in manifests:
            assert m.label == "ID"
            case = load_case(m)
            assert len(case.members) == SMALL.n_members
            assert case.ground_truth is not None
            assert case.members[0].shape == SMALL.shape
        config_blob = json.loads((out / "config.json").read_text())
        assert config_blob["seed"] == SMALL.seed
        ledger = json.loads((out / "cases" / manifests[0].case_id
                             / "blobs.json").read_text())
        assert ledger["case_id"] == manifests[0].case_id
        assert all(b["kind"] in ("tp", "fp") for b in ledger["blobs"])

    def test_rerun_is_byte_identical(self, tmp_path):
        a = tmp_path / "a"
        b = tmp_path / "b"
        generate_dataset(SMALL, a)
        generate_dataset(SMALL, b)
        files_a = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
        files_b = sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
        assert files_a == files_b
        for rel in files_a:
            assert (a / rel).read_bytes() == (b / rel).read_bytes()

    def test_matches_in_memory_generation(self, tmp_path):
        generate_dataset(SMALL, tmp_path / "d")
        manifests = load_manifest(tmp_path / "d" / "manifest.json")
        for index, m in enumerate(manifests):
            expected = generate_case(SMALL, index)
            loaded = load_case(m)
            assert loaded.case_id == expected.case.case_id
            for got, want in zip(loaded.members, expected.case.members):
                np.testing.assert_array_equal(got.data, want.data)
            np.testing.assert_array_equal(
                loaded.ground_truth.data, expected.case.ground_truth.data)

    def test_empty_dataset(self, tmp_path):
        returned = generate_dataset(replace(SMALL, n_cases=0),
                                    tmp_path / "e")
        assert returned == []
        assert load_manifest(tmp_path / "e" / "manifest.json") == []

    def test_ood_companion_has_no_gt_files(self, tmp_path):
        ood = ood_companion(SMALL)
        assert ood.label == "OOD"
        assert ood.fp_mode == "discrepant"
        assert ood.blobs_per_case == (0, 0)
        assert ood.seed != SMALL.seed
        generate_dataset(ood, tmp_path / "ood")
        manifests = load_manifest(tmp_path / "ood" / "manifest.json")
        assert manifests
        for m in manifests:
            assert m.label == "OOD"
            assert m.gt_path is None
            case = load_case(m)
            # materialized as all-background
            assert case.ground_truth is not None
            assert not case.ground_truth.data.any()

    def test_scoring_generated_cases_round_trips(self, tmp_path):
        manifests = generate_dataset(SMALL, tmp_path / "s")
        methods = [Method.parse("ens:entropy:mean"), Method.parse("ens:pd")]
        case = load_case(manifests[0])
        scored = score_structures(case, methods)
        expected = score_structures(generate_case(SMALL, 0).case, methods)
        assert [s.scores for s in scored] == [s.scores for s in expected]


class TestDiceOnGeneratedBlobs:
    def test_uncorrupted_blob_has_high_dice(self):
        config = SynthConfig(shape=(24, 32, 32), n_cases=1, n_members=3,
                             blobs_per_case=(1, 1), radius_range=(4.0, 5.0),
                             tp_noise=0.0, fp_rate=0.0, fp_quality_link=0.0,
                             seed=2)
        synth = generate_case(config, 0)
        mean = mean_prediction(synth.case)
        pred = binarize(mean, 0.5)
        assert dice_coefficient(pred, synth.case.ground_truth) > 0.9
