#!/usr/bin/env python3
"""Emit parity fixtures for the array-bindings package.

Every bound operation gets 50 randomized input cases together with the
core's outputs. Array payloads are base64-encoded little-endian buffers
(float32 inputs, float64 expected maps, uint8 masks, int32 labels);
scalars ride along as plain JSON numbers, which round-trip exactly
because JSON numbers are doubles.
"""

import argparse
import base64
import json
import sys
from pathlib import Path

import numpy as np

from swu import (
    Aggregation,
    BinaryMask,
    EnsembleCase,
    FrocEntry,
    Orientation,
    ScalarVolume,
    Structure,
    aggregate,
    average_entropy_map,
    average_recall,
    connected_components,
    entropy_map,
    fp_reduction,
    froc_from_entries,
    label_components,
    mean_prediction,
    mutual_information_map,
    pairwise_dice_score,
    spearman_abs,
    variance_map,
)

N_CASES = 50
UNIT_SPACING = (1.0, 1.0, 1.0)


def b64(array: np.ndarray) -> str:
    buf = np.ascontiguousarray(array)
    if buf.dtype.byteorder == ">":
        buf = buf.astype(buf.dtype.newbyteorder("<"))
    return base64.b64encode(buf.tobytes()).decode("ascii")


def random_shape(rng, lo=3, hi=7):
    return tuple(int(v) for v in rng.integers(lo, hi + 1, size=3))


def random_members(rng, shape, n_members):
    return [rng.random(shape, dtype=np.float64).astype(np.float32)
            for _ in range(n_members)]


def volume(data):
    return ScalarVolume(data.shape, UNIT_SPACING, data)


def ensemble(members):
    return EnsembleCase("fixture",
                        tuple(volume(m) for m in members))


def map_cases(rng, op):
    cases = []
    for _ in range(N_CASES):
        shape = random_shape(rng)
        n_members = int(rng.integers(2, 6))
        members = random_members(rng, shape, n_members)
        case = ensemble(members)
        if op == "entropy_map":
            expected = entropy_map(case.members[0]).data
            payload = {"shape": list(shape), "p": b64(members[0])}
        elif op == "average_entropy_map":
            expected = average_entropy_map(case).data
            payload = {"shape": list(shape), "members": [b64(m) for m in members]}
        elif op == "mutual_information_map":
            expected = mutual_information_map(case).data
            payload = {"shape": list(shape), "members": [b64(m) for m in members]}
        elif op == "variance_map":
            expected = variance_map(case).data
            payload = {"shape": list(shape), "members": [b64(m) for m in members]}
        elif op == "mean_prediction":
            expected = mean_prediction(case).data
            payload = {"shape": list(shape), "members": [b64(m) for m in members]}
        else:
            raise ValueError(op)
        payload["expected"] = b64(expected.astype(np.float64))
        cases.append(payload)
    return cases


def component_cases(rng):
    cases = []
    for trial in range(N_CASES):
        shape = random_shape(rng, 4, 8)
        density = float(rng.uniform(0.1, 0.5))
        mask = (rng.random(shape) < density).astype(np.uint8)
        connectivity = (6, 18, 26)[trial % 3]
        labels = label_components(
            BinaryMask(shape, UNIT_SPACING, mask), connectivity)
        cases.append({
            "shape": list(shape),
            "mask": b64(mask),
            "connectivity": connectivity,
            "expected": b64(labels.astype(np.int32)),
        })
    return cases


def aggregate_cases(rng):
    names = [a.value for a in Aggregation]
    cases = []
    for trial in range(N_CASES):
        shape = random_shape(rng)
        data = rng.random(shape)  # non-negative, sumlog-safe
        if trial % 7 == 0:
            data[tuple(v // 2 for v in shape)] = 0.0  # exercise the log floor
        n = int(rng.integers(1, 9))
        flat = rng.choice(data.size, size=n, replace=False)
        voxels = np.stack(np.unravel_index(np.sort(flat), shape), axis=1)
        structure = Structure.from_voxels(1, voxels)
        name = names[trial % len(names)]
        expected = aggregate(volume(data), structure, Aggregation(name))
        cases.append({
            "shape": list(shape),
            "map": b64(data.astype(np.float64)),
            "voxels": voxels.tolist(),
            "aggregation": name,
            "expected": expected,
        })
    return cases


def pairwise_dice_cases(rng):
    cases = []
    produced = 0
    while produced < N_CASES:
        shape = random_shape(rng, 4, 6)
        n_members = int(rng.integers(2, 5))
        members = [(rng.random(shape) < rng.uniform(0.2, 0.6))
                   .astype(np.float32) for _ in range(n_members)]
        case = ensemble(members)
        structures = connected_components(
            BinaryMask(shape, UNIT_SPACING,
                       (mean_prediction(case).data > 0.5).astype(np.uint8)))
        if not structures:
            continue
        structure = structures[produced % len(structures)]
        expected = pairwise_dice_score(case, structure, 0.5)
        cases.append({
            "shape": list(shape),
            "members": [b64(m) for m in members],
            "voxels": structure.voxels.tolist(),
            "threshold": 0.5,
            "expected": expected,
        })
        produced += 1
    return cases


def random_entries(rng, n, force_fp=False, force_tie=False):
    pool = rng.random(max(2, n // 3 if force_tie else n))
    scores = rng.choice(pool, n)
    is_tp = rng.random(n) < 0.5
    if force_fp and is_tp.all():
        is_tp[int(rng.integers(n))] = False
    entries = []
    for i in range(n):
        ref = ["c", int(i)] if is_tp[i] else None
        entries.append({"score": float(scores[i]), "is_tp": bool(is_tp[i]),
                        "gt_ref": ref})
    n_gt = max(int(is_tp.sum()), 1)
    return entries, n_gt


def to_core_entries(entries):
    return [FrocEntry(e["score"], e["is_tp"],
                      tuple(e["gt_ref"]) if e["gt_ref"] else None)
            for e in entries]


def froc_cases(rng):
    cases = []
    for trial in range(N_CASES):
        n = int(rng.integers(1, 30))
        entries, n_gt = random_entries(rng, n, force_tie=True)
        n_cases = int(rng.integers(1, 6))
        orientation = (Orientation.CONFIDENCE, Orientation.UNCERTAINTY)[trial % 2]
        curve = froc_from_entries(to_core_entries(entries), n_cases, n_gt,
                                  orientation)
        cases.append({
            "entries": entries,
            "n_cases": n_cases,
            "n_gt": n_gt,
            "orientation": orientation.value,
            "expected": [
                {"threshold": p.threshold, "recall": p.recall,
                 "avg_fp_per_case": p.avg_fp_per_case,
                 "precision": p.precision}
                for p in curve.points
            ],
        })
    return cases


def curve_metric_cases(rng, metric):
    cases = []
    while len(cases) < N_CASES:
        n = int(rng.integers(2, 30))
        entries, n_gt = random_entries(rng, n, force_fp=(metric == "fp"),
                                       force_tie=True)
        curve = froc_from_entries(to_core_entries(entries), 3, n_gt,
                                  Orientation.CONFIDENCE)
        try:
            expected = (fp_reduction(curve) if metric == "fp"
                        else average_recall(curve))
        except ValueError:
            continue
        cases.append({
            "points": [
                {"threshold": p.threshold, "recall": p.recall,
                 "avg_fp_per_case": p.avg_fp_per_case,
                 "precision": p.precision}
                for p in curve.points
            ],
            "expected": expected,
        })
    return cases


def spearman_cases(rng):
    cases = []
    while len(cases) < N_CASES:
        n = int(rng.integers(2, 30))
        x = rng.choice(rng.random(max(2, n // 2)), n)
        y = rng.choice(rng.random(max(2, n // 2)), n)
        if len(set(x.tolist())) < 2 or len(set(y.tolist())) < 2:
            continue
        cases.append({
            "x": x.tolist(),
            "y": y.tolist(),
            "expected": spearman_abs(x, y),
        })
    return cases


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out-dir", type=Path,
                        default=Path(__file__).resolve().parent.parent
                        / "frontend" / "fixtures")
    parser.add_argument("--seed", type=int, default=20240815)
    args = parser.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    fixtures = {
        "entropy_map": map_cases(rng, "entropy_map"),
        "average_entropy_map": map_cases(rng, "average_entropy_map"),
        "mutual_information_map": map_cases(rng, "mutual_information_map"),
        "variance_map": map_cases(rng, "variance_map"),
        "mean_prediction": map_cases(rng, "mean_prediction"),
        "connected_components": component_cases(rng),
        "aggregate": aggregate_cases(rng),
        "pairwise_dice_score": pairwise_dice_cases(rng),
        "froc_curve": froc_cases(rng),
        "fp_reduction": curve_metric_cases(rng, "fp"),
        "average_recall": curve_metric_cases(rng, "ar"),
        "spearman_abs": spearman_cases(rng),
    }
    args.out_dir.mkdir(parents=True, exist_ok=True)
    for op, cases in fixtures.items():
        path = args.out_dir / f"{op}.json"
        with open(path, "w") as f:
            json.dump({"op": op, "cases": cases}, f)
        print(f"wrote {len(cases)} cases to {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
