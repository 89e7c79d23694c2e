"""Structure extraction and per-structure uncertainty scoring.

A structure is one connected component of a binarized prediction mask.
Each structure receives a single score per requested method, either by
aggregating a voxel-wise map over its voxels or by the pairwise-Dice
agreement of the binarized ensemble members around it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import ndimage

from swu.uncertainty import (
    Estimator,
    MethodSpec,
    Orientation,
    confidence_map,
    mean_prediction,
)
from swu.volume_io import BinaryMask, EnsembleCase, ScalarVolume

CONNECTIVITIES = (6, 18, 26)

# floor inside the sum-log aggregation; mirrors the log guard used by the
# voxel kernels so exact-zero uncertainties stay finite
SUMLOG_EPS = 1e-7


@dataclass(frozen=True)
class Structure:
    """One connected component: label, voxel coordinates, tight bbox."""

    label: int
    voxels: np.ndarray  # (n, 3) int array of (z, y, x), row-major order
    bbox: tuple[tuple[int, int, int], tuple[int, int, int]]  # inclusive corners
    volume_voxels: int

    def __post_init__(self):
        voxels = np.ascontiguousarray(self.voxels, dtype=np.int64)
        if voxels.ndim != 2 or voxels.shape[1] != 3 or voxels.shape[0] == 0:
            raise ValueError("structure voxel list must be a non-empty (n, 3) array")
        if self.volume_voxels != voxels.shape[0]:
            raise ValueError("volume_voxels must equal the voxel count")
        lo = tuple(int(v) for v in voxels.min(axis=0))
        hi = tuple(int(v) for v in voxels.max(axis=0))
        if self.bbox != (lo, hi):
            raise ValueError(f"bbox {self.bbox} does not tightly bound voxels")
        voxels.flags.writeable = False
        object.__setattr__(self, "voxels", voxels)

    @classmethod
    def from_voxels(cls, label: int, voxels: np.ndarray) -> "Structure":
        voxels = np.ascontiguousarray(voxels, dtype=np.int64)
        if voxels.ndim != 2 or voxels.shape[1] != 3 or voxels.shape[0] == 0:
            raise ValueError("structure voxel list must be a non-empty (n, 3) array")
        lo = tuple(int(v) for v in voxels.min(axis=0))
        hi = tuple(int(v) for v in voxels.max(axis=0))
        return cls(label, voxels, (lo, hi), voxels.shape[0])


class Aggregation(str, Enum):
    MEAN = "mean"
    MIN = "min"
    MAX = "max"
    MEDIAN = "median"
    SUMLOG = "sumlog"


@dataclass(frozen=True)
class Method:
    """A scoring recipe: estimator + prediction source + aggregation.

    Canonical id is ``<source>:<estimator>:<aggregation>``, e.g.
    ``ens:entropy:mean`` or ``m0:pred:max``; pairwise dice scores whole
    structures and drops the aggregation part (``ens:pd``).
    """

    spec: MethodSpec
    aggregation: Aggregation | None

    def __post_init__(self):
        if self.spec.estimator is Estimator.PAIRWISE_DICE:
            object.__setattr__(self, "aggregation", None)
        elif self.aggregation is None:
            raise ValueError(
                f"{self.spec.estimator.value} requires an aggregation")

    @property
    def id(self) -> str:
        base = f"{self.spec.source_id}:{self.spec.estimator.value}"
        if self.aggregation is None:
            return base
        return f"{base}:{self.aggregation.value}"

    @property
    def orientation(self) -> Orientation:
        return self.spec.orientation

    @classmethod
    def parse(cls, text: str) -> "Method":
        parts = text.strip().split(":")
        if len(parts) not in (2, 3):
            raise ValueError(f"unknown method {text!r} "
                             "(expected <source>:<estimator>[:<aggregation>])")
        source, est_name = parts[0], parts[1]
        if source == "ens":
            member = None
        elif source.startswith("m") and source[1:].isdigit():
            member = int(source[1:])
        else:
            raise ValueError(f"unknown method source {source!r} in {text!r}")
        try:
            estimator = Estimator(est_name)
        except ValueError:
            raise ValueError(f"unknown estimator {est_name!r} in {text!r}") from None
        if estimator is Estimator.PAIRWISE_DICE:
            if len(parts) == 3:
                raise ValueError(f"{text!r}: pairwise dice takes no aggregation")
            aggregation = None
        else:
            if len(parts) != 3:
                raise ValueError(f"{text!r}: missing aggregation")
            try:
                aggregation = Aggregation(parts[2])
            except ValueError:
                raise ValueError(
                    f"unknown aggregation {parts[2]!r} in {text!r}") from None
        return cls(MethodSpec(estimator, member), aggregation)


DEFAULT_METHOD_IDS = (
    "m0:pred:max",
    "m0:pred:mean",
    "m0:logit:mean",
    "m0:entropy:mean",
    "m0:entropy:min",
    "m0:entropy:sumlog",
    "ens:pred:max",
    "ens:pred:mean",
    "ens:logit:mean",
    "ens:avg-entropy:min",
    "ens:entropy:mean",
    "ens:entropy:min",
    "ens:entropy:sumlog",
    "ens:mutual-info:mean",
    "ens:pd",
    "ens:variance:min",
)


def default_methods() -> list[Method]:
    """The full reported roster: single-model and ensemble method rows."""
    return [Method.parse(i) for i in DEFAULT_METHOD_IDS]


@dataclass
class ScoredStructure:
    """A structure with one finite score per requested method."""

    structure: Structure
    case_id: str
    basis: str  # prediction the structure was extracted from: "ens" or "m<k>"
    scores: dict[str, float]


def binarize(prob: ScalarVolume, threshold: float) -> BinaryMask:
    """Foreground where probability strictly exceeds the threshold."""
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must be in (0, 1), got {threshold}")
    data = (prob.data > threshold).astype(np.uint8)
    return BinaryMask(prob.shape, prob.spacing, data)


def _neighborhood(connectivity: int) -> np.ndarray:
    if connectivity not in CONNECTIVITIES:
        raise ValueError(f"connectivity must be one of {CONNECTIVITIES}, "
                         f"got {connectivity}")
    return ndimage.generate_binary_structure(3, {6: 1, 18: 2, 26: 3}[connectivity])


def label_components(mask: BinaryMask, connectivity: int = 26) -> np.ndarray:
    """Label array with components numbered 1..K by first row-major voxel."""
    labeled, n = ndimage.label(mask.data, structure=_neighborhood(connectivity))
    if n == 0:
        return labeled.astype(np.int32)
    # renumber so labels follow first-encounter order in a row-major scan
    values, first = np.unique(labeled.ravel(), return_index=True)
    fg = values != 0
    values, first = values[fg], first[fg]
    remap = np.zeros(n + 1, dtype=np.int32)
    remap[values[np.argsort(first, kind="stable")]] = np.arange(1, len(values) + 1)
    return remap[labeled]


def connected_components(mask: BinaryMask, connectivity: int = 26) -> list[Structure]:
    """Split a mask into structures under 6/18/26 neighborhood connectivity."""
    labeled = label_components(mask, connectivity)
    return structures_from_labels(labeled)


def structures_from_labels(labeled: np.ndarray) -> list[Structure]:
    """Build Structure records from a label array (labels 1..K, 0 background)."""
    structures = []
    for lab, slc in enumerate(ndimage.find_objects(labeled), start=1):
        if slc is None:
            continue
        offset = np.array([s.start for s in slc], dtype=np.int64)
        voxels = np.argwhere(labeled[slc] == lab) + offset
        structures.append(Structure.from_voxels(lab, voxels))
    return structures


def aggregate(volume: ScalarVolume, structure: Structure, agg: Aggregation) -> float:
    """One statistic of the map values over the structure's voxels."""
    values = volume.data[tuple(structure.voxels.T)].astype(np.float64)
    if agg is Aggregation.MEAN:
        return float(values.mean())
    if agg is Aggregation.MIN:
        return float(values.min())
    if agg is Aggregation.MAX:
        return float(values.max())
    if agg is Aggregation.MEDIAN:
        # lower-middle element for even counts; no interpolation
        return float(np.sort(values)[(values.size - 1) // 2])
    if agg is Aggregation.SUMLOG:
        if float(values.min()) < 0.0:
            raise ValueError("sum-log aggregation needs a non-negative map")
        return float(np.log(np.maximum(values, SUMLOG_EPS)).sum())
    raise ValueError(f"unknown aggregation {agg!r}")


def _pair_dice_counts(sizes: np.ndarray, inters: dict[tuple[int, int], int],
                      i: int, j: int) -> float:
    si, sj = int(sizes[i]), int(sizes[j])
    if si == 0 and sj == 0:
        return 1.0
    if si == 0 or sj == 0:
        return 0.0
    return 2.0 * inters[(i, j)] / (si + sj)


class _PairwiseDiceScorer:
    """Shared machinery scoring structures by inter-member mask agreement.

    Members are binarized once; the union of member masks is split into
    components so each structure is scored against the member masks
    restricted to its own union component.
    """

    def __init__(self, case: EnsembleCase, threshold: float,
                 connectivity: int = 26):
        if case.n_members < 2:
            raise ValueError("pairwise dice needs at least 2 members")
        if not 0.0 < threshold < 1.0:
            raise ValueError(f"threshold must be in (0, 1), got {threshold}")
        self.member_masks = [m.data > threshold for m in case.members]
        union = np.logical_or.reduce(self.member_masks)
        union_mask = BinaryMask(case.grid_shape, case.spacing,
                                union.astype(np.uint8))
        self.union_labels = label_components(union_mask, connectivity)
        self.union_slices = ndimage.find_objects(self.union_labels)

    def score(self, structure: Structure) -> float:
        region_label = 0
        for z, y, x in structure.voxels:
            region_label = int(self.union_labels[z, y, x])
            if region_label != 0:
                break
        if region_label == 0:
            # no member marks any of these voxels: unanimous background
            return 1.0
        slc = self.union_slices[region_label - 1]
        region = self.union_labels[slc] == region_label
        restricted = [np.logical_and(m[slc], region) for m in self.member_masks]
        sizes = np.array([int(r.sum()) for r in restricted])
        t = len(restricted)
        inters = {}
        for i in range(t):
            for j in range(i + 1, t):
                if sizes[i] and sizes[j]:
                    inters[(i, j)] = int(
                        np.logical_and(restricted[i], restricted[j]).sum())
        pair_scores = [_pair_dice_counts(sizes, inters, i, j)
                       for i in range(t) for j in range(i + 1, t)]
        # fsum: exact, so member order can never change the average
        return math.fsum(pair_scores) / len(pair_scores)


def pairwise_dice_score(case: EnsembleCase, structure: Structure,
                        threshold: float, connectivity: int = 26) -> float:
    """Mean Dice over all member pairs, restricted to the union component
    containing the structure. Empty-vs-empty pairs count 1, half-empty 0."""
    return _PairwiseDiceScorer(case, threshold, connectivity).score(structure)


def _basis_order_key(source_id: str) -> int:
    return -1 if source_id == "ens" else int(source_id[1:])


def score_structures(case: EnsembleCase, methods: list[Method],
                     threshold: float = 0.5,
                     connectivity: int = 26) -> list[ScoredStructure]:
    """Extract and score structures for every requested method.

    Structures come from the prediction each method reads: the ensemble
    mean for ensemble-source methods, the selected member for
    single-model methods. The output carries one group of structures per
    distinct basis, each scored by that basis's methods.
    """
    if not isinstance(case, EnsembleCase):
        raise TypeError(
            "score_structures expects an EnsembleCase; wrap raw member "
            "arrays in ScalarVolume and EnsembleCase first")
    for m in methods:
        m.spec.validate_for_case(case)
    by_basis: dict[str, list[Method]] = {}
    for m in methods:
        by_basis.setdefault(m.spec.source_id, []).append(m)

    out: list[ScoredStructure] = []
    for basis in sorted(by_basis, key=_basis_order_key):
        basis_methods = by_basis[basis]
        if basis == "ens":
            basis_prob = mean_prediction(case)
        else:
            basis_prob = case.members[int(basis[1:])]
        mask = binarize(basis_prob, threshold)
        structures = connected_components(mask, connectivity)

        map_cache: dict[MethodSpec, ScalarVolume] = {}
        pd_scorer = None
        for m in basis_methods:
            if m.spec.estimator is Estimator.PAIRWISE_DICE:
                if pd_scorer is None:
                    pd_scorer = _PairwiseDiceScorer(case, threshold, connectivity)
            elif m.spec not in map_cache:
                map_cache[m.spec] = confidence_map(m.spec, case)

        for s in structures:
            scores = {}
            for m in basis_methods:
                if m.spec.estimator is Estimator.PAIRWISE_DICE:
                    scores[m.id] = pd_scorer.score(s)
                else:
                    scores[m.id] = aggregate(map_cache[m.spec], s, m.aggregation)
            out.append(ScoredStructure(s, case.case_id, basis, scores))
    return out
