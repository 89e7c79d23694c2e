"""Command-line pipeline: synth -> score -> eval -> report.

``synth`` writes a synthetic dataset, ``score`` turns a dataset into a
per-structure score table, ``eval`` matches structures against ground
truth and computes the per-method metrics for one dataset split, and
``report`` merges several eval summaries into one comparison table.
All outputs are deterministic functions of their inputs.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial
from pathlib import Path

from swu.metrics import ScoredMatch, evaluate, match_structures
from swu.score_table import (
    ScoreRow,
    read_score_csv,
    rows_from_scored,
    write_score_csv,
)
from swu.structures import (
    CONNECTIVITIES,
    DEFAULT_METHOD_IDS,
    Method,
    binarize,
    connected_components,
    score_structures,
)
from swu.synth import FP_MODES, SynthConfig, generate_dataset, ood_companion
from swu.uncertainty import mean_prediction
from swu.volume_io import CaseManifest, load_case, load_manifest

WORKERS_ENV = "SWU_WORKERS"

SPLITS = {"id": {"ID"}, "ood": {"OOD"}, "combined": {"ID", "OOD"}}


@dataclass(frozen=True)
class RunConfig:
    """Scoring and evaluation knobs shared across the pipeline."""

    threshold: float = 0.5
    connectivity: int = 26
    min_iou: float = 0.0
    method_ids: tuple[str, ...] = DEFAULT_METHOD_IDS
    workers: int = 1

    def __post_init__(self):
        if not 0.0 < self.threshold < 1.0:
            raise ValueError(f"threshold must be in (0, 1), got {self.threshold}")
        if self.connectivity not in CONNECTIVITIES:
            raise ValueError(f"connectivity must be one of {CONNECTIVITIES}")
        if not 0.0 <= self.min_iou < 1.0:
            raise ValueError(f"min_iou must be in [0, 1), got {self.min_iou}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        object.__setattr__(self, "method_ids", tuple(self.method_ids))

    def methods(self) -> list[Method]:
        return [Method.parse(i) for i in self.method_ids]


def _resolve_workers(value: int | None) -> int:
    if value is None:
        value = int(os.environ.get(WORKERS_ENV, "1"))
    return value


def _method_filename(method_id: str) -> str:
    return method_id.replace(":", "-")


def _score_case(manifest: CaseManifest, methods: list[Method],
                threshold: float, connectivity: int) -> list[ScoreRow]:
    try:
        case = load_case(manifest)
        scored = score_structures(case, methods, threshold, connectivity)
    except Exception as exc:
        raise RuntimeError(f"case {manifest.case_id}: {exc}") from exc
    return rows_from_scored(scored, manifest.label)


def cmd_synth(args: argparse.Namespace) -> int:
    config = SynthConfig(
        shape=tuple(args.shape),
        n_cases=args.cases,
        n_members=args.members,
        blobs_per_case=tuple(args.blobs),
        radius_range=tuple(args.radius),
        tp_noise=args.tp_noise,
        fp_rate=args.fp_rate,
        fp_mode=args.fp_mode,
        fp_quality_link=args.fp_quality_link,
        seed=args.seed,
        label=args.label,
        name=args.name,
    )
    manifests = generate_dataset(config, args.out)
    print(f"wrote {len(manifests)} cases to {args.out}")
    if args.ood_companion is not None:
        companion = ood_companion(config, fp_mode=args.ood_fp_mode)
        ood_manifests = generate_dataset(companion, args.ood_companion)
        print(f"wrote {len(ood_manifests)} companion cases to {args.ood_companion}")
    return 0


def cmd_score(args: argparse.Namespace) -> int:
    config = RunConfig(
        threshold=args.threshold,
        connectivity=args.connectivity,
        method_ids=tuple(args.methods) if args.methods else DEFAULT_METHOD_IDS,
        workers=_resolve_workers(args.workers),
    )
    methods = config.methods()
    manifests = load_manifest(args.data)
    score_one = partial(_score_case, methods=methods,
                        threshold=config.threshold,
                        connectivity=config.connectivity)
    rows: list[ScoreRow] = []
    if config.workers > 1 and len(manifests) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            for case_rows in pool.map(score_one, manifests):
                rows.extend(case_rows)
    else:
        for manifest in manifests:
            rows.extend(score_one(manifest))
    write_score_csv(rows, list(config.method_ids), args.out)
    print(f"wrote {len(rows)} structure scores to {args.out}")
    return 0


def _eval_records(manifests: list[CaseManifest], rows: list[ScoreRow],
                  bases: list[str], config: RunConfig) -> tuple[list[ScoredMatch], int]:
    """Re-extract and match structures, then join them with score rows."""
    by_case_basis: dict[tuple[str, str], dict[int, ScoreRow]] = {}
    for row in rows:
        by_case_basis.setdefault((row.case_id, row.basis), {})[row.structure_label] = row

    records: list[ScoredMatch] = []
    n_gt = 0
    for manifest in manifests:
        try:
            case = load_case(manifest)
            if case.ground_truth is None:
                raise ValueError("no ground truth to evaluate against")
            gt_structures = connected_components(case.ground_truth,
                                                 config.connectivity)
            n_gt += len(gt_structures)
            for basis in bases:
                if basis == "ens":
                    prob = mean_prediction(case)
                else:
                    prob = case.members[int(basis[1:])]
                pred = connected_components(binarize(prob, config.threshold),
                                            config.connectivity)
                match = match_structures(pred, gt_structures, config.min_iou)
                by_label = match.by_pred_label()
                case_rows = by_case_basis.pop((manifest.case_id, basis), {})
                if set(case_rows) != {s.label for s in pred}:
                    raise ValueError(
                        f"score table rows for basis {basis} do not match "
                        f"the dataset's structures")
                for s in pred:
                    row = case_rows[s.label]
                    if row.volume_voxels != s.volume_voxels:
                        raise ValueError(
                            f"score table structure {s.label} (basis {basis}) "
                            f"differs from the dataset")
                    m = by_label[s.label]
                    gt_ref = (manifest.case_id, m.matched_gt_label) if m.is_tp else None
                    records.append(ScoredMatch(
                        case_id=manifest.case_id,
                        basis=basis,
                        structure_label=s.label,
                        is_tp=m.is_tp,
                        dice=m.dice,
                        gt_ref=gt_ref,
                        scores=row.scores,
                    ))
        except Exception as exc:
            raise RuntimeError(f"case {manifest.case_id}: {exc}") from exc
    return records, n_gt


def cmd_eval(args: argparse.Namespace) -> int:
    config = RunConfig(
        threshold=args.threshold,
        connectivity=args.connectivity,
        min_iou=args.min_iou,
    )
    manifests = []
    for path in args.data:
        manifests.extend(load_manifest(path))
    if len({m.case_id for m in manifests}) != len(manifests):
        raise ValueError("duplicate case ids across the given manifests")
    keep = SPLITS[args.split]
    manifests = [m for m in manifests if m.label in keep]
    if not manifests:
        raise ValueError(f"split {args.split!r} selects no cases")

    rows = []
    csv_methods = None
    for path in args.scores:
        table_rows, table_methods = read_score_csv(path)
        if csv_methods is None:
            csv_methods = table_methods
        elif [m.id for m in table_methods] != [m.id for m in csv_methods]:
            raise ValueError("score tables disagree on their method columns")
        rows.extend(table_rows)
    if args.methods:
        available = {m.id for m in csv_methods}
        methods = [Method.parse(i) for i in args.methods]
        missing = [m.id for m in methods if m.id not in available]
        if missing:
            raise ValueError(f"methods not present in score table: {missing}")
    else:
        methods = csv_methods
    case_ids = {m.case_id for m in manifests}
    rows = [r for r in rows if r.case_id in case_ids]

    bases = sorted({m.spec.source_id for m in methods},
                   key=lambda b: -1 if b == "ens" else int(b[1:]))
    records, n_gt = _eval_records(manifests, rows, bases, config)

    dataset_id = args.dataset_id
    if dataset_id is None:
        dataset_id = f"{Path(args.data[0]).resolve().parent.name}-{args.split}"
    reports = evaluate(records, methods, len(manifests), n_gt, dataset_id)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for method in methods:
        report = reports[method.id]
        stem = _method_filename(method.id)
        with open(out_dir / f"{stem}.report.json", "w") as f:
            json.dump(report.to_dict(), f, indent=2, sort_keys=True)
        with open(out_dir / f"{stem}.froc.csv", "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["threshold", "recall", "avg_fp_per_case", "precision"])
            for p in report.curve.points:
                writer.writerow([repr(p.threshold), repr(p.recall),
                                 repr(p.avg_fp_per_case), repr(p.precision)])
    summary = {
        "dataset": dataset_id,
        "split": args.split,
        "n_cases": len(manifests),
        "n_gt": n_gt,
        "methods": [reports[m.id].to_dict() for m in methods],
    }
    with open(out_dir / "summary.json", "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
    print(f"wrote {len(methods)} method reports to {out_dir}")
    return 0


REPORT_METRICS = ("fp_reduction", "average_recall", "spearman_tp", "spearman_all")


def cmd_report(args: argparse.Namespace) -> int:
    summaries = []
    for path in args.summaries:
        with open(path) as f:
            summaries.append(json.load(f))
    methods: list[str] = []
    for summary in summaries:
        for entry in summary["methods"]:
            if entry["method"] not in methods:
                methods.append(entry["method"])
    header = ["method"]
    for summary in summaries:
        header.extend(f"{summary['dataset']}/{metric}" for metric in REPORT_METRICS)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for mid in methods:
            record = [mid]
            for summary in summaries:
                entry = next((e for e in summary["methods"] if e["method"] == mid),
                             None)
                for metric in REPORT_METRICS:
                    value = None if entry is None else entry.get(metric)
                    record.append("NA" if value is None else repr(value))
            writer.writerow(record)
    print(f"wrote report for {len(methods)} methods to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="swu",
        description="structure-wise uncertainty scoring and evaluation")
    sub = parser.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("synth", help="generate a synthetic ensemble dataset")
    ps.add_argument("--out", required=True, type=Path, help="dataset directory")
    ps.add_argument("--cases", type=int, default=12)
    ps.add_argument("--members", type=int, default=5)
    ps.add_argument("--shape", type=int, nargs=3, default=[48, 64, 64],
                    metavar=("Z", "Y", "X"))
    ps.add_argument("--blobs", type=int, nargs=2, default=[2, 4],
                    metavar=("MIN", "MAX"), help="true structures per case")
    ps.add_argument("--radius", type=float, nargs=2, default=[3.0, 6.0],
                    metavar=("MIN", "MAX"), help="blob semi-axis range, voxels")
    ps.add_argument("--tp-noise", type=float, default=0.5,
                    help="member center jitter, voxels")
    ps.add_argument("--fp-rate", type=float, default=2.5,
                    help="expected false-positive blobs per case")
    ps.add_argument("--fp-mode", choices=FP_MODES, default="agreeing")
    ps.add_argument("--fp-quality-link", type=float, default=1.0)
    ps.add_argument("--seed", type=int, default=0)
    ps.add_argument("--label", choices=["ID", "OOD"], default="ID")
    ps.add_argument("--name", default="synthetic", help="case id prefix")
    ps.add_argument("--ood-companion", type=Path, default=None, metavar="DIR",
                    help="also write a matching false-positive-only dataset")
    ps.add_argument("--ood-fp-mode", choices=FP_MODES, default="discrepant")
    ps.set_defaults(func=cmd_synth)

    pq = sub.add_parser("score", help="score every structure of every case")
    pq.add_argument("--data", required=True, type=Path, help="dataset manifest")
    pq.add_argument("--out", required=True, type=Path, help="score CSV path")
    pq.add_argument("--methods", nargs="+", metavar="ID",
                    help="method ids (default: the full roster)")
    pq.add_argument("--threshold", type=float, default=0.5)
    pq.add_argument("--connectivity", type=int, choices=list(CONNECTIVITIES),
                    default=26)
    pq.add_argument("--workers", type=int, default=None,
                    help=f"parallel case workers (default ${WORKERS_ENV} or 1)")
    pq.set_defaults(func=cmd_score)

    pe = sub.add_parser("eval", help="evaluate scores against ground truth")
    pe.add_argument("--data", required=True, type=Path, nargs="+",
                    help="dataset manifest(s)")
    pe.add_argument("--scores", required=True, type=Path, nargs="+",
                    help="score CSV(s) matching the manifests")
    pe.add_argument("--out-dir", required=True, type=Path)
    pe.add_argument("--split", choices=sorted(SPLITS), default="id")
    pe.add_argument("--min-iou", type=float, default=0.0)
    pe.add_argument("--threshold", type=float, default=0.5)
    pe.add_argument("--connectivity", type=int, choices=list(CONNECTIVITIES),
                    default=26)
    pe.add_argument("--methods", nargs="+", metavar="ID",
                    help="subset of score-table methods to evaluate")
    pe.add_argument("--dataset-id", default=None)
    pe.set_defaults(func=cmd_eval)

    pr = sub.add_parser("report", help="merge eval summaries into one table")
    pr.add_argument("summaries", nargs="+", type=Path)
    pr.add_argument("--out", required=True, type=Path, help="merged CSV path")
    pr.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
