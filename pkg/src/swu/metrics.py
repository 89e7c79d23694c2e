"""Detection matching and downstream evaluation metrics.

Predicted structures are matched to ground-truth structures by overlap;
the resulting TP/FP labels feed a score-sweep (FROC-style) curve, from
which false-positive reduction and precision-banded average recall are
read off. Rank correlation against per-structure Dice measures how well
a score tracks segmentation quality.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from operator import attrgetter

import numpy as np
from scipy.stats import rankdata

from swu.structures import Method, ScoredStructure, Structure
from swu.uncertainty import Orientation
from swu.volume_io import BinaryMask


def dice_coefficient(a: BinaryMask | np.ndarray, b: BinaryMask | np.ndarray) -> float:
    """Dice overlap of two masks; two empty masks count as identical (1)."""
    da = (a.data if isinstance(a, BinaryMask) else np.asarray(a)).astype(bool)
    db = (b.data if isinstance(b, BinaryMask) else np.asarray(b)).astype(bool)
    if da.shape != db.shape:
        raise ValueError(f"grid mismatch: {da.shape} vs {db.shape}")
    total = int(da.sum()) + int(db.sum())
    if total == 0:
        return 1.0
    return 2.0 * int(np.logical_and(da, db).sum()) / total


@dataclass(frozen=True)
class StructureMatch:
    """Match outcome for one predicted structure."""

    pred_label: int
    is_tp: bool
    matched_gt_label: int | None
    dice: float  # Dice with the matched ground-truth structure; 0 for FP


@dataclass
class MatchResult:
    matches: list[StructureMatch]  # one per predicted structure, label order
    detected_by: dict[int, set[int]]  # gt label -> pred labels matched to it
    n_gt: int

    @property
    def n_detected(self) -> int:
        return sum(1 for preds in self.detected_by.values() if preds)

    @property
    def n_tp(self) -> int:
        return sum(1 for m in self.matches if m.is_tp)

    @property
    def n_fp(self) -> int:
        return len(self.matches) - self.n_tp

    def by_pred_label(self) -> dict[int, StructureMatch]:
        return {m.pred_label: m for m in self.matches}


def match_structures(pred: list[Structure], gt: list[Structure],
                     min_iou: float = 0.0) -> MatchResult:
    """Assign each prediction to its highest-IoU ground-truth structure.

    A prediction is a true positive when that IoU strictly exceeds
    ``min_iou`` (so any overlap counts at the default 0). IoU ties go to
    the lower ground-truth label. Both structure lists must come from
    the same voxel grid.
    """
    if not 0.0 <= min_iou < 1.0:
        raise ValueError(f"min_iou must be in [0, 1), got {min_iou}")
    detected_by: dict[int, set[int]] = {g.label: set() for g in gt}
    matches: list[StructureMatch] = []
    if gt:
        corners = [g.bbox[1] for g in gt] + [s.bbox[1] for s in pred]
        shape = tuple(max(c[d] for c in corners) + 1 for d in range(3))
        gt_volume = np.zeros(shape, dtype=np.int32)
        for g in gt:
            gt_volume[tuple(g.voxels.T)] = g.label
        gt_sizes = {g.label: g.volume_voxels for g in gt}
    for s in pred:
        best_label = None
        best_iou = 0.0
        best_inter = 0
        if gt:
            at = gt_volume[tuple(s.voxels.T)]
            labels, counts = np.unique(at[at > 0], return_counts=True)
            # ascending label order, so strict > keeps the lower label on ties
            for lab, inter in zip(labels.tolist(), counts.tolist()):
                iou = inter / (s.volume_voxels + gt_sizes[lab] - inter)
                if iou > best_iou:
                    best_label, best_iou, best_inter = lab, iou, inter
        if best_label is not None and best_iou > min_iou:
            dice = 2.0 * best_inter / (s.volume_voxels + gt_sizes[best_label])
            detected_by[best_label].add(s.label)
            matches.append(StructureMatch(s.label, True, best_label, dice))
        else:
            matches.append(StructureMatch(s.label, False, None, 0.0))
    return MatchResult(matches, detected_by, len(gt))


@dataclass(frozen=True)
class FrocEntry:
    """One structure entering the score sweep."""

    score: float
    is_tp: bool
    gt_ref: tuple[str, int] | None = None  # (case_id, gt label) when TP


@dataclass(frozen=True)
class FrocPoint:
    threshold: float
    recall: float
    avg_fp_per_case: float
    precision: float


@dataclass
class FrocCurve:
    points: list[FrocPoint]  # strictest threshold first
    n_cases: int
    n_gt: int
    orientation: Orientation


def froc_from_entries(entries: list[FrocEntry], n_cases: int, n_gt: int,
                      orientation: Orientation) -> FrocCurve:
    """Sweep the keep-threshold over all observed scores.

    Confidence scores keep structures scoring at or above the threshold,
    uncertainty scores at or below; the sweep therefore runs from the
    strictest threshold (best scores only) to the loosest (keep all).
    One point per distinct score value; recall counts distinct detected
    ground-truth structures.
    """
    if not entries:
        raise ValueError("no structures to sweep")
    if n_cases <= 0:
        raise ValueError(f"n_cases must be positive, got {n_cases}")
    if any(not np.isfinite(e.score) for e in entries):
        raise ValueError("non-finite structure score in sweep")
    ordered = sorted(entries, key=attrgetter("score"),
                     reverse=orientation is Orientation.CONFIDENCE)
    points: list[FrocPoint] = []
    tp = fp = 0
    detected: set[tuple[str, int]] = set()
    i, n = 0, len(ordered)
    while i < n:
        threshold = ordered[i].score
        while i < n and ordered[i].score == threshold:
            entry = ordered[i]
            if entry.is_tp:
                if entry.gt_ref is None:
                    raise ValueError("true-positive entry lacks a gt reference")
                tp += 1
                detected.add(entry.gt_ref)
            else:
                fp += 1
            i += 1
        recall = len(detected) / n_gt if n_gt else 0.0
        points.append(FrocPoint(float(threshold), recall,
                                fp / n_cases, tp / (tp + fp)))
    return FrocCurve(points, n_cases, n_gt, orientation)


def froc_curve(scored: list[ScoredStructure], matches: dict[str, MatchResult],
               method: Method, n_cases: int) -> FrocCurve:
    """Curve for one method from scored structures plus per-case matches.

    ``matches`` maps case id to the match result for the structures the
    method's basis extracted; structures from other bases are skipped.
    """
    basis = method.spec.source_id
    entries = []
    for s in scored:
        if s.basis != basis:
            continue
        if method.id not in s.scores:
            raise ValueError(f"structure not scored by {method.id}")
        match = matches[s.case_id].by_pred_label()[s.structure.label]
        gt_ref = (s.case_id, match.matched_gt_label) if match.is_tp else None
        entries.append(FrocEntry(s.scores[method.id], match.is_tp, gt_ref))
    n_gt = sum(m.n_gt for m in matches.values())
    return froc_from_entries(entries, n_cases, n_gt, method.orientation)


def fp_reduction(curve: FrocCurve) -> float:
    """Fraction of false positives removable at <= 5% max-recall loss.

    With F100 the FP load when keeping everything and F95 the smallest
    FP load among sweep points retaining at least 95% of the maximum
    recall, this is (F100 - F95) / F100. No interpolation between
    points. Identical scores everywhere collapse the sweep to one point
    and give 0.
    """
    last = curve.points[-1]
    f100 = last.avg_fp_per_case
    if f100 <= 0.0:
        raise ValueError("no false positives to reduce")
    target = 0.95 * last.recall
    f95 = min(p.avg_fp_per_case for p in curve.points if p.recall >= target)
    return (f100 - f95) / f100


def average_recall(curve: FrocCurve) -> float:
    """Mean of best recalls over the lower half of the precision range.

    100 evenly spaced precision levels span [min precision, midpoint of
    min and max precision]; each level contributes the highest recall
    among sweep points meeting that precision. A flat curve (all
    precisions equal) reduces to the recall at that single band point.
    """
    if len(curve.points) < 2:
        raise ValueError("need at least two sweep points for a recall band")
    precisions = [p.precision for p in curve.points]
    lo, hi = min(precisions), max(precisions)
    levels = np.linspace(lo, 0.5 * (lo + hi), 100)
    recalls = [max(p.recall for p in curve.points if p.precision >= level)
               for level in levels]
    return float(np.mean(recalls))


def spearman_abs(x, y) -> float:
    """Absolute Spearman correlation: Pearson correlation of average ranks."""
    a = np.asarray(x, dtype=np.float64)
    b = np.asarray(y, dtype=np.float64)
    if a.ndim != 1 or a.shape != b.shape:
        raise ValueError("inputs must be 1-d arrays of equal length")
    if a.size < 2:
        raise ValueError("need at least two pairs for a rank correlation")
    if np.all(a == a[0]) or np.all(b == b[0]):
        raise ValueError("constant input has undefined rank correlation")
    rho = np.corrcoef(rankdata(a), rankdata(b))[0, 1]
    return float(abs(rho))


@dataclass
class ScoredMatch:
    """A scored structure joined with its match outcome; the unit record
    consumed by dataset-level evaluation."""

    case_id: str
    basis: str
    structure_label: int
    is_tp: bool
    dice: float
    gt_ref: tuple[str, int] | None
    scores: dict[str, float] = field(default_factory=dict)


@dataclass
class EvalReport:
    """All evaluation outputs for one method on one dataset split.

    Metrics that are undefined on the split (a rank correlation over
    fewer than two structures or constant values, a sweep with no false
    positives) are reported as None rather than a made-up number.
    """

    method_id: str
    dataset_id: str
    orientation: str
    n_cases: int
    n_gt: int
    n_structures: int
    n_tp: int
    n_fp: int
    fp_reduction: float | None
    average_recall: float | None
    spearman_tp: float | None
    spearman_all: float | None
    curve: FrocCurve

    def to_dict(self) -> dict:
        return {
            "method": self.method_id,
            "dataset": self.dataset_id,
            "orientation": self.orientation,
            "n_cases": self.n_cases,
            "n_gt": self.n_gt,
            "n_structures": self.n_structures,
            "n_tp": self.n_tp,
            "n_fp": self.n_fp,
            "fp_reduction": self.fp_reduction,
            "average_recall": self.average_recall,
            "spearman_tp": self.spearman_tp,
            "spearman_all": self.spearman_all,
        }


def _maybe_spearman(dice: list[float], scores: list[float]) -> float | None:
    try:
        return spearman_abs(dice, scores)
    except ValueError:
        return None


def evaluate(records: list[ScoredMatch], methods: list[Method], n_cases: int,
             n_gt: int, dataset_id: str = "dataset") -> dict[str, EvalReport]:
    """Compute every method's report over one dataset split.

    Each record must carry a score for a method to count toward that
    method's sweep; rank correlations use matched-structure Dice for
    true positives and 0 for false positives in the all-structures
    variant.
    """
    reports: dict[str, EvalReport] = {}
    for method in methods:
        mid = method.id
        rows = [r for r in records if mid in r.scores]
        if not rows:
            raise ValueError(f"no structures scored by {mid}")
        entries = [FrocEntry(r.scores[mid], r.is_tp, r.gt_ref) for r in rows]
        curve = froc_from_entries(entries, n_cases, n_gt, method.orientation)
        try:
            fp_red = fp_reduction(curve)
        except ValueError:
            fp_red = None
        try:
            avg_rec = average_recall(curve)
        except ValueError:
            avg_rec = None
        tp_rows = [r for r in rows if r.is_tp]
        spearman_tp = _maybe_spearman([r.dice for r in tp_rows],
                                      [r.scores[mid] for r in tp_rows])
        spearman_all = _maybe_spearman([r.dice if r.is_tp else 0.0 for r in rows],
                                       [r.scores[mid] for r in rows])
        n_tp = len(tp_rows)
        reports[mid] = EvalReport(
            method_id=mid,
            dataset_id=dataset_id,
            orientation=method.orientation.value,
            n_cases=n_cases,
            n_gt=n_gt,
            n_structures=len(rows),
            n_tp=n_tp,
            n_fp=len(rows) - n_tp,
            fp_reduction=fp_red,
            average_recall=avg_rec,
            spearman_tp=spearman_tp,
            spearman_all=spearman_all,
            curve=curve,
        )
    return reports
