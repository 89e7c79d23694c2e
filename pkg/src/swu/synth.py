"""Synthetic segmentation ensembles with known ground truth.

Cases are built from ellipsoidal blobs. A true-positive blob writes a
sigmoid probability profile around its nominal surface into every
member; its ground-truth mask is the exact ellipsoid. A per-blob
corruption level widens the transition band and shifts the predicted
boundary off the true surface, so corrupted blobs are segmented worse
and score as less certain. False-positive blobs have no ground truth
and come in two regimes: agreeing (every member hallucinates the same
low-amplitude blob) and discrepant (only a member subset hallucinates
it, confidently and in slightly different places).
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from swu.volume_io import (
    VALID_LABELS,
    BinaryMask,
    CaseManifest,
    EnsembleCase,
    ScalarVolume,
    save_manifest,
    save_volume,
)

# probability profile: p = amplitude * sigmoid((s - rho) / w), rho the
# normalized elliptical radius (1 on the nominal surface)
BASE_WIDTH = 0.15  # transition width of an uncorrupted blob
WIDTH_GAIN = 1.5  # extra width per unit corruption
SHIFT_GAIN = 0.3  # boundary shift per unit corruption
RENDER_CUT = 8.0  # render out to s + RENDER_CUT * w (p ~ 3e-4 there)

AGREEING_AMPLITUDE = (0.55, 0.85)
DISCREPANT_AMPLITUDE = (0.90, 1.00)
DISCREPANT_JITTER_FRACTION = 0.18  # of the mean semi-axis, at least MIN below
DISCREPANT_JITTER_MIN = 0.75

SEPARATION_FACTOR = 1.3
SEPARATION_PAD = 5.0
PLACEMENT_RETRIES = 200

FP_MODES = ("agreeing", "discrepant")


@dataclass(frozen=True)
class SynthConfig:
    """Everything that determines a synthetic dataset, seed included."""

    shape: tuple[int, int, int] = (48, 64, 64)
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    n_cases: int = 12
    n_members: int = 5
    blobs_per_case: tuple[int, int] = (2, 4)
    radius_range: tuple[float, float] = (3.0, 6.0)
    tp_noise: float = 0.5  # member center jitter, voxels
    fp_rate: float = 2.5  # expected false-positive blobs per case
    fp_mode: str = "agreeing"
    fp_quality_link: float = 1.0  # how strongly corruption degrades boundaries
    seed: int = 0
    label: str = "ID"
    name: str = "synthetic"

    def __post_init__(self):
        if len(self.shape) != 3 or any(int(s) <= 0 for s in self.shape):
            raise ValueError(f"shape must be 3 positive extents, got {self.shape}")
        if self.n_cases < 0:
            raise ValueError("n_cases must be >= 0")
        if self.n_members < 2:
            raise ValueError("n_members must be >= 2 (this models an ensemble)")
        lo, hi = self.blobs_per_case
        if not 0 <= lo <= hi:
            raise ValueError(f"bad blobs_per_case range {self.blobs_per_case}")
        rlo, rhi = self.radius_range
        if not 1.0 <= rlo <= rhi:
            raise ValueError(f"semi-axes must be >= 1 voxel, got {self.radius_range}")
        if self.tp_noise < 0.0:
            raise ValueError("tp_noise must be >= 0")
        if self.fp_rate < 0.0:
            raise ValueError("fp_rate must be >= 0")
        if self.fp_mode not in FP_MODES:
            raise ValueError(f"fp_mode must be one of {FP_MODES}, "
                             f"got {self.fp_mode!r}")
        if not 0.0 <= self.fp_quality_link <= 1.0:
            raise ValueError("fp_quality_link must be in [0, 1]")
        if self.label not in VALID_LABELS:
            raise ValueError(f"label must be one of {VALID_LABELS}")
        margin = 2.0 * (SEPARATION_FACTOR * rhi + 3.0 * self.tp_noise + 2.0)
        if hi > 0 and min(self.shape) <= margin:
            raise ValueError(
                f"shape {self.shape} too small for radius_range {self.radius_range}")


@dataclass(frozen=True)
class Blob:
    """One rendered blob and the exact parameters that produced it."""

    kind: str  # "tp" | "fp"
    center: tuple[float, float, float]
    semi_axes: tuple[float, float, float]
    corruption: float  # 0 for fp blobs
    shift_sign: float  # direction the corrupted boundary moves
    amplitude: float
    members: tuple[int, ...]  # members that render this blob
    jitter: np.ndarray  # (n_members, 3) per-member center offsets

    def to_record(self) -> dict:
        return {
            "kind": self.kind,
            "center": list(self.center),
            "semi_axes": list(self.semi_axes),
            "corruption": self.corruption,
            "shift_sign": self.shift_sign,
            "amplitude": self.amplitude,
            "members": list(self.members),
            "jitter": self.jitter.tolist(),
        }


@dataclass
class SynthCase:
    """A generated case plus its blob ledger (the generative record)."""

    case: EnsembleCase
    blobs: list[Blob]

    @property
    def tp_blobs(self) -> list[Blob]:
        return [b for b in self.blobs if b.kind == "tp"]

    @property
    def fp_blobs(self) -> list[Blob]:
        return [b for b in self.blobs if b.kind == "fp"]


def _place_blob(rng: np.random.Generator, config: SynthConfig,
                placed: list[tuple[np.ndarray, float]],
                jitter_3sigma: float) -> tuple[np.ndarray, np.ndarray]:
    """Rejection-sample a center and semi-axes clear of all placed blobs."""
    rlo, rhi = config.radius_range
    shape = np.asarray(config.shape, dtype=np.float64)
    for _ in range(PLACEMENT_RETRIES):
        semi_axes = rng.uniform(rlo, rhi, size=3)
        margin = SEPARATION_FACTOR * semi_axes + jitter_3sigma + 1.5
        if np.any(margin >= shape - 1.0 - margin):
            continue
        center = rng.uniform(margin, shape - 1.0 - margin)
        r = float(semi_axes.max())
        ok = all(
            np.linalg.norm(center - c) >= SEPARATION_FACTOR * (r + pr) + SEPARATION_PAD
            for c, pr in placed
        )
        if ok:
            placed.append((center, r))
            return center, semi_axes
    raise RuntimeError(
        f"could not place blob {len(placed) + 1} after {PLACEMENT_RETRIES} tries; "
        f"shape {config.shape} is too crowded for these blob counts and radii")


def _render_profile(volume: np.ndarray, center: np.ndarray,
                    semi_axes: np.ndarray, amplitude: float,
                    shift: float, width: float) -> None:
    """Max-combine one blob's sigmoid profile into a member volume."""
    cut = shift + RENDER_CUT * width
    half = semi_axes * cut + 1.0
    lo = np.maximum(np.floor(center - half).astype(int), 0)
    hi = np.minimum(np.ceil(center + half).astype(int) + 1, volume.shape)
    axes = [
        (np.arange(lo[d], hi[d], dtype=np.float64) - center[d]) / semi_axes[d]
        for d in range(3)
    ]
    rho = np.sqrt(axes[0][:, None, None] ** 2
                  + axes[1][None, :, None] ** 2
                  + axes[2][None, None, :] ** 2)
    profile = amplitude / (1.0 + np.exp((rho - shift) / width))
    region = volume[lo[0]:hi[0], lo[1]:hi[1], lo[2]:hi[2]]
    np.maximum(region, profile, out=region)


def _render_gt(mask: np.ndarray, center: np.ndarray,
               semi_axes: np.ndarray) -> None:
    half = semi_axes + 1.0
    lo = np.maximum(np.floor(center - half).astype(int), 0)
    hi = np.minimum(np.ceil(center + half).astype(int) + 1, mask.shape)
    axes = [
        (np.arange(lo[d], hi[d], dtype=np.float64) - center[d]) / semi_axes[d]
        for d in range(3)
    ]
    rho2 = (axes[0][:, None, None] ** 2
            + axes[1][None, :, None] ** 2
            + axes[2][None, None, :] ** 2)
    region = mask[lo[0]:hi[0], lo[1]:hi[1], lo[2]:hi[2]]
    region |= rho2 <= 1.0


def generate_case(config: SynthConfig, index: int) -> SynthCase:
    """Deterministically build case ``index`` of the configured dataset."""
    if not 0 <= index:
        raise ValueError("case index must be >= 0")
    rng = np.random.default_rng([config.seed, index])
    t = config.n_members
    all_members = tuple(range(t))
    placed: list[tuple[np.ndarray, float]] = []
    blobs: list[Blob] = []

    lo, hi = config.blobs_per_case
    n_tp = int(rng.integers(lo, hi + 1))
    for _ in range(n_tp):
        center, semi_axes = _place_blob(rng, config, placed,
                                        3.0 * config.tp_noise)
        corruption = float(rng.uniform())
        shift_sign = float(rng.choice([-1.0, 1.0]))
        jitter = rng.normal(0.0, config.tp_noise, size=(t, 3))
        blobs.append(Blob("tp", tuple(center), tuple(semi_axes), corruption,
                          shift_sign, 1.0, all_members, jitter))

    n_fp = int(rng.poisson(config.fp_rate))
    for _ in range(n_fp):
        if config.fp_mode == "agreeing":
            sigma = config.tp_noise
            center, semi_axes = _place_blob(rng, config, placed, 3.0 * sigma)
            amplitude = float(rng.uniform(*AGREEING_AMPLITUDE))
            members = all_members
        else:
            # a confident minority-free subset: over half the members, never all
            sigma = max(DISCREPANT_JITTER_MIN,
                        DISCREPANT_JITTER_FRACTION
                        * 0.5 * (config.radius_range[0] + config.radius_range[1]))
            center, semi_axes = _place_blob(rng, config, placed, 3.0 * sigma)
            amplitude = float(rng.uniform(*DISCREPANT_AMPLITUDE))
            if t >= 3:
                k = int(rng.integers(t // 2 + 1, t))
                members = tuple(sorted(rng.choice(t, size=k, replace=False).tolist()))
            else:
                members = all_members
        jitter = rng.normal(0.0, sigma, size=(t, 3))
        blobs.append(Blob("fp", tuple(center), tuple(semi_axes), 0.0,
                          1.0, amplitude, members, jitter))

    link = config.fp_quality_link
    member_volumes = []
    for m in range(t):
        data = np.zeros(config.shape, dtype=np.float64)
        for blob in blobs:
            if m not in blob.members:
                continue
            if blob.kind == "tp":
                shift = 1.0 + blob.shift_sign * SHIFT_GAIN * link * blob.corruption
                width = BASE_WIDTH * (1.0 + WIDTH_GAIN * link * blob.corruption)
            else:
                shift, width = 1.0, BASE_WIDTH
            center = np.asarray(blob.center) + blob.jitter[m]
            _render_profile(data, center, np.asarray(blob.semi_axes),
                            blob.amplitude, shift, width)
        member_volumes.append(ScalarVolume(
            config.shape, config.spacing,
            np.clip(data, 0.0, 1.0).astype(np.float32)))

    gt = np.zeros(config.shape, dtype=bool)
    for blob in blobs:
        if blob.kind == "tp":
            _render_gt(gt, np.asarray(blob.center), np.asarray(blob.semi_axes))
    gt_mask = BinaryMask(config.shape, config.spacing, gt.astype(np.uint8))

    case_id = f"{config.name}-{index:04d}"
    case = EnsembleCase(case_id, tuple(member_volumes), gt_mask)
    return SynthCase(case, blobs)


def ood_companion(config: SynthConfig, fp_mode: str = "discrepant",
                  fp_rate: float | None = None,
                  n_cases: int | None = None) -> SynthConfig:
    """A matching out-of-distribution config: no true structures, false
    positives only, disjoint seed stream."""
    return dataclasses.replace(
        config,
        label="OOD",
        blobs_per_case=(0, 0),
        fp_mode=fp_mode,
        fp_rate=config.fp_rate if fp_rate is None else fp_rate,
        n_cases=config.n_cases if n_cases is None else n_cases,
        seed=config.seed + 10007,
        name=f"{config.name}-ood",
    )


def generate_dataset(config: SynthConfig, out_dir: str | Path) -> list[CaseManifest]:
    """Write all cases (members, ground truth, blob ledgers) plus a manifest.

    Out-of-distribution datasets get no ground-truth files; their
    manifest entries leave the ground truth unset so loading yields
    all-background masks. Output is a pure function of the config.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifests = []
    for i in range(config.n_cases):
        sc = generate_case(config, i)
        case_dir = out / "cases" / sc.case.case_id
        member_paths = []
        for m, vol in enumerate(sc.case.members):
            path = case_dir / f"member{m:02d}.json"
            save_volume(vol, path)
            member_paths.append(path)
        gt_path = None
        if config.label == "ID":
            gt_path = case_dir / "gt.json"
            save_volume(sc.case.ground_truth.to_volume(), gt_path)
        ledger = {
            "case_id": sc.case.case_id,
            "blobs": [b.to_record() for b in sc.blobs],
        }
        with open(case_dir / "blobs.json", "w") as f:
            json.dump(ledger, f, indent=2, sort_keys=True)
        manifests.append(CaseManifest(
            case_id=sc.case.case_id,
            member_paths=tuple(member_paths),
            gt_path=gt_path,
            label=config.label,
        ))
    with open(out / "config.json", "w") as f:
        json.dump(dataclasses.asdict(config), f, indent=2, sort_keys=True)
    save_manifest(manifests, out / "manifest.json")
    return manifests
