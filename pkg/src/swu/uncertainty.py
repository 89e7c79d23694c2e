"""Voxel-wise uncertainty and confidence maps for binary segmentation ensembles.

All estimators treat a probability volume p as the two-channel field
{p, 1-p}. Maps are computed in float64; logs are natural. Ensemble
reductions run over a per-voxel sorted member stack so that member order
never changes the result, not even in the last bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from swu.volume_io import EnsembleCase, ScalarVolume

# probability floor/ceiling inside log-odds; keeps logit finite at {0, 1}
LOGIT_EPS = 1e-7

# numerically tiny negative MI values are clamped to zero; anything worse
# would violate entropy concavity and indicates a bug
MI_NEGATIVE_TOLERANCE = 1e-6


class Estimator(str, Enum):
    PRED = "pred"
    LOGIT = "logit"
    ENTROPY = "entropy"
    AVG_ENTROPY = "avg-entropy"
    MUTUAL_INFO = "mutual-info"
    VARIANCE = "variance"
    PAIRWISE_DICE = "pd"


class Orientation(str, Enum):
    CONFIDENCE = "confidence"    # higher score = keep
    UNCERTAINTY = "uncertainty"  # higher score = filter


#: estimators that only exist for an ensemble (inter-member disagreement
#: or per-member averaging); the rest also apply to a single member
ENSEMBLE_ONLY = frozenset({
    Estimator.AVG_ENTROPY,
    Estimator.MUTUAL_INFO,
    Estimator.VARIANCE,
    Estimator.PAIRWISE_DICE,
})

_ORIENTATIONS = {
    Estimator.PRED: Orientation.CONFIDENCE,
    Estimator.LOGIT: Orientation.CONFIDENCE,
    Estimator.PAIRWISE_DICE: Orientation.CONFIDENCE,
    Estimator.ENTROPY: Orientation.UNCERTAINTY,
    Estimator.AVG_ENTROPY: Orientation.UNCERTAINTY,
    Estimator.MUTUAL_INFO: Orientation.UNCERTAINTY,
    Estimator.VARIANCE: Orientation.UNCERTAINTY,
}


@dataclass(frozen=True)
class MethodSpec:
    """An uncertainty estimator plus its prediction source.

    ``member=None`` means the ensemble-mean prediction; an integer selects
    one member volume. Discrepancy/averaging-over-members estimators only
    accept the ensemble source.
    """

    estimator: Estimator
    member: int | None = None

    def __post_init__(self):
        if self.estimator in ENSEMBLE_ONLY and self.member is not None:
            raise ValueError(
                f"{self.estimator.value} requires the ensemble source, "
                f"not member {self.member}")
        if self.member is not None and self.member < 0:
            raise ValueError(f"member index must be >= 0, got {self.member}")

    @property
    def orientation(self) -> Orientation:
        return _ORIENTATIONS[self.estimator]

    @property
    def source_id(self) -> str:
        return "ens" if self.member is None else f"m{self.member}"

    def validate_for_case(self, case: EnsembleCase) -> None:
        if self.estimator in ENSEMBLE_ONLY and case.n_members < 2:
            raise ValueError(
                f"{self.estimator.value} needs at least 2 members, "
                f"case {case.case_id} has {case.n_members}")
        if self.member is not None and self.member >= case.n_members:
            raise ValueError(
                f"member {self.member} out of range for case "
                f"{case.case_id} with {case.n_members} members")

    def source_probability(self, case: EnsembleCase) -> ScalarVolume:
        """The probability volume this spec derives its map from."""
        if self.member is None:
            return mean_prediction(case)
        return case.members[self.member]


def _sorted_stack(case: EnsembleCase) -> np.ndarray:
    stack = np.stack([m.data for m in case.members]).astype(np.float64)
    stack.sort(axis=0)
    return stack


def _entropy_values(p: np.ndarray) -> np.ndarray:
    # x*log(x) with the one-hot convention: exact 0 at x in {0, 1}; the
    # tiny floor only guards log(0), it never moves a representable value
    tiny = np.finfo(np.float64).tiny
    q = 1.0 - p
    h = -(p * np.log(np.maximum(p, tiny)) + q * np.log(np.maximum(q, tiny)))
    h += 0.0  # normalize -0.0
    return h


def mean_prediction(case: EnsembleCase) -> ScalarVolume:
    """Voxel-wise arithmetic mean of the member probability volumes."""
    _need_case(case)
    if case.n_members == 1:
        return case.members[0]
    stack = _sorted_stack(case)
    mean = stack.sum(axis=0) / case.n_members
    np.clip(mean, 0.0, 1.0, out=mean)
    # where every member agrees, sum/T must not cost even one bit
    mean = np.where(stack[0] == stack[-1], stack[0], mean)
    ref = case.members[0]
    return ScalarVolume._unchecked(ref.shape, ref.spacing, mean)


def entropy_map(prob: ScalarVolume) -> ScalarVolume:
    """Binary entropy -p ln p - (1-p) ln(1-p) per voxel, range [0, ln 2]."""
    if not isinstance(prob, ScalarVolume):
        raise TypeError("entropy_map expects a ScalarVolume, "
                        f"got {type(prob).__name__}")
    p = prob.data.astype(np.float64, copy=False)
    h = _entropy_values(p)
    return ScalarVolume._unchecked(prob.shape, prob.spacing, h)


def average_entropy_map(case: EnsembleCase) -> ScalarVolume:
    """Mean over members of each member's own entropy map."""
    _need_ensemble(case, "average entropy")
    stack = _sorted_stack(case)
    first = _entropy_values(stack[0])
    total = first.copy()
    for t in range(1, stack.shape[0]):
        total += _entropy_values(stack[t])
    total /= stack.shape[0]
    # unanimous voxels average T equal entropies; keep that exact too
    total = np.where(stack[0] == stack[-1], first, total)
    ref = case.members[0]
    return ScalarVolume._unchecked(ref.shape, ref.spacing, total)


def mutual_information_map(case: EnsembleCase) -> ScalarVolume:
    """Entropy of the mean prediction minus the average entropy (BALD).

    Zero when members agree everywhere; concavity keeps it non-negative,
    so tiny negative float residue is clamped to 0.
    """
    _need_ensemble(case, "mutual information")
    mi = entropy_map(mean_prediction(case)).data - average_entropy_map(case).data
    worst = float(mi.min())
    if worst < -MI_NEGATIVE_TOLERANCE:
        raise AssertionError(
            f"mutual information fell below -{MI_NEGATIVE_TOLERANCE} "
            f"(min {worst}); entropy concavity violated")
    mi = np.maximum(mi, 0.0)
    ref = case.members[0]
    return ScalarVolume._unchecked(ref.shape, ref.spacing, mi)


def variance_map(case: EnsembleCase) -> ScalarVolume:
    """Population variance of member probabilities per voxel, range [0, 0.25].

    Equals the two-channel variance (1/(2T)) sum_t sum_c (P_t^c - Pbar^c)^2
    since both channels of a binary output deviate identically.
    """
    _need_ensemble(case, "variance")
    stack = _sorted_stack(case)
    mean = stack.sum(axis=0) / stack.shape[0]
    var = np.zeros(stack.shape[1:], dtype=np.float64)
    for t in range(stack.shape[0]):
        var += np.square(stack[t] - mean)
    var /= stack.shape[0]
    ref = case.members[0]
    return ScalarVolume._unchecked(ref.shape, ref.spacing, var)


def logit_map(prob: ScalarVolume) -> ScalarVolume:
    """ln(p / (1-p)) per voxel, with p clamped to [eps, 1-eps] first."""
    p = prob.data.astype(np.float64, copy=False)
    p = np.clip(p, LOGIT_EPS, 1.0 - LOGIT_EPS)
    values = np.log(p) - np.log1p(-p)
    return ScalarVolume._unchecked(prob.shape, prob.spacing, values)


def confidence_map(spec: MethodSpec, case: EnsembleCase) -> ScalarVolume:
    """Voxel map for any map-producing estimator of ``spec``.

    Pairwise Dice has no voxel map (it scores whole structures) and is
    rejected here. Orientation stays attached to the spec itself.
    """
    spec.validate_for_case(case)
    est = spec.estimator
    if est is Estimator.PAIRWISE_DICE:
        raise ValueError(
            "pairwise dice is structure-level and produces no voxel map")
    if est is Estimator.PRED:
        return spec.source_probability(case)
    if est is Estimator.LOGIT:
        return logit_map(spec.source_probability(case))
    if est is Estimator.ENTROPY:
        return entropy_map(spec.source_probability(case))
    if est is Estimator.AVG_ENTROPY:
        return average_entropy_map(case)
    if est is Estimator.MUTUAL_INFO:
        return mutual_information_map(case)
    if est is Estimator.VARIANCE:
        return variance_map(case)
    raise ValueError(f"unknown estimator {est!r}")


def _need_case(case: EnsembleCase) -> None:
    if not isinstance(case, EnsembleCase):
        raise TypeError("ensemble kernels expect an EnsembleCase, "
                        f"got {type(case).__name__}")


def _need_ensemble(case: EnsembleCase, what: str) -> None:
    _need_case(case)
    if case.n_members < 2:
        raise ValueError(
            f"{what} needs at least 2 members, case {case.case_id} "
            f"has {case.n_members}")
