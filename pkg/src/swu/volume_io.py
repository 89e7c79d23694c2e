"""Bit-exact container I/O for 3D volumes, plus ensemble case manifests.

A volume on disk is a pair of files sharing one stem:

  ``<name>.json``  header: {"shape": [z, y, x], "spacing": [mm, mm, mm],
                   "dtype": "f32le", "order": "row-major"}
  ``<name>.raw``   payload: little-endian float32, row-major, z*y*x values

A dataset manifest is a JSON array of case records with member volume
paths relative to the manifest's own directory.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

HEADER_SUFFIX = ".json"
PAYLOAD_SUFFIX = ".raw"

# serialization jitter this small is clamped; anything worse is corruption
PROBABILITY_TOLERANCE = 1e-6

VALID_LABELS = ("ID", "OOD")


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ValueError(message)


@dataclass(frozen=True)
class ScalarVolume:
    """A dense 3D grid of real values with physical voxel spacing.

    ``data`` is a (z, y, x) float32 or float64 array, C-contiguous.
    Stored volumes are float32; derived maps may be float64 in memory.
    The array is frozen after validation.
    """

    shape: tuple[int, int, int]
    spacing: tuple[float, float, float]
    data: np.ndarray

    def __post_init__(self):
        shape = tuple(int(s) for s in self.shape)
        spacing = tuple(float(s) for s in self.spacing)
        _require(len(shape) == 3 and all(s > 0 for s in shape),
                 f"shape must be 3 positive integers, got {self.shape}")
        _require(all(s > 0 and math.isfinite(s) for s in spacing),
                 f"spacing must be strictly positive, got {self.spacing}")
        data = np.ascontiguousarray(self.data)
        _require(data.dtype in (np.float32, np.float64),
                 f"data must be float32 or float64, got {data.dtype}")
        _require(data.size == shape[0] * shape[1] * shape[2],
                 f"data length {data.size} does not match shape {shape}")
        data = data.reshape(shape)
        _require(bool(np.isfinite(data).all()), "data contains non-finite values")
        data.flags.writeable = False
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "data", data)

    @classmethod
    def _unchecked(cls, shape, spacing, data: np.ndarray) -> "ScalarVolume":
        # fast path for kernel outputs whose invariants hold by construction
        vol = object.__new__(cls)
        data.flags.writeable = False
        object.__setattr__(vol, "shape", shape)
        object.__setattr__(vol, "spacing", spacing)
        object.__setattr__(vol, "data", data)
        return vol

    def with_data(self, data: np.ndarray) -> "ScalarVolume":
        """New volume on the same grid carrying different values."""
        return ScalarVolume(self.shape, self.spacing, data)


@dataclass(frozen=True)
class BinaryMask:
    """A 3D mask whose voxels are exactly 0 or 1 (uint8)."""

    shape: tuple[int, int, int]
    spacing: tuple[float, float, float]
    data: np.ndarray

    def __post_init__(self):
        shape = tuple(int(s) for s in self.shape)
        spacing = tuple(float(s) for s in self.spacing)
        _require(len(shape) == 3 and all(s > 0 for s in shape),
                 f"shape must be 3 positive integers, got {self.shape}")
        _require(all(s > 0 and math.isfinite(s) for s in spacing),
                 f"spacing must be strictly positive, got {self.spacing}")
        data = np.ascontiguousarray(self.data)
        _require(data.size == shape[0] * shape[1] * shape[2],
                 f"data length {data.size} does not match shape {shape}")
        data = data.reshape(shape)
        values = np.unique(data)
        _require(bool(np.isin(values, (0, 1)).all()),
                 "mask values must be exactly 0 or 1")
        data = data.astype(np.uint8)
        data.flags.writeable = False
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "data", data)

    @classmethod
    def from_volume(cls, volume: ScalarVolume) -> "BinaryMask":
        return cls(volume.shape, volume.spacing, volume.data)

    def to_volume(self) -> ScalarVolume:
        return ScalarVolume(self.shape, self.spacing,
                            self.data.astype(np.float32))


@dataclass(frozen=True)
class EnsembleCase:
    """One case: T member probability volumes plus optional ground truth."""

    case_id: str
    members: tuple[ScalarVolume, ...]
    ground_truth: BinaryMask | None = None

    def __post_init__(self):
        members = tuple(self.members)
        _require(len(members) >= 1, f"case {self.case_id}: empty ensemble")
        ref = members[0]
        for i, m in enumerate(members):
            _require(m.shape == ref.shape and m.spacing == ref.spacing,
                     f"case {self.case_id}: inconsistent ensemble "
                     f"(member {i} grid {m.shape}/{m.spacing} != {ref.shape}/{ref.spacing})")
            lo = float(m.data.min())
            hi = float(m.data.max())
            _require(lo >= 0.0 and hi <= 1.0,
                     f"case {self.case_id}: member {i} is not a probability volume "
                     f"(values span [{lo}, {hi}])")
        if self.ground_truth is not None:
            gt = self.ground_truth
            _require(gt.shape == ref.shape and gt.spacing == ref.spacing,
                     f"case {self.case_id}: ground truth grid mismatch")
        object.__setattr__(self, "members", members)

    @property
    def n_members(self) -> int:
        return len(self.members)

    @property
    def grid_shape(self) -> tuple[int, int, int]:
        return self.members[0].shape

    @property
    def spacing(self) -> tuple[float, float, float]:
        return self.members[0].spacing


@dataclass
class CaseManifest:
    """One manifest record: where a case's volumes live and its provenance.

    ``member_paths`` / ``gt_path`` are absolute after ``load_manifest``
    (resolved against the manifest's directory).
    """

    case_id: str
    member_paths: list[Path]
    gt_path: Path | None = None
    label: str = "ID"
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        _require(len(self.member_paths) >= 1,
                 f"case {self.case_id}: manifest lists no member volumes")
        _require(self.label in VALID_LABELS,
                 f"case {self.case_id}: label must be one of {VALID_LABELS}, "
                 f"got {self.label!r}")
        self.member_paths = [Path(p) for p in self.member_paths]
        self.gt_path = Path(self.gt_path) if self.gt_path is not None else None


def _volume_stem(path: str | Path) -> Path:
    path = Path(path)
    if path.suffix in (HEADER_SUFFIX, PAYLOAD_SUFFIX):
        return path.with_suffix("")
    return path


def load_volume(path: str | Path) -> ScalarVolume:
    """Load a ``<name>.json`` + ``<name>.raw`` volume pair.

    ``path`` may point at the header, the payload, or the bare stem.
    Raises FileNotFoundError for missing files and ValueError for a
    malformed header, payload length mismatch, or non-finite values.
    """
    stem = _volume_stem(path)
    header_path = stem.with_suffix(HEADER_SUFFIX)
    payload_path = stem.with_suffix(PAYLOAD_SUFFIX)
    if not header_path.is_file():
        raise FileNotFoundError(f"missing volume header {header_path}")
    if not payload_path.is_file():
        raise FileNotFoundError(f"missing volume payload {payload_path}")

    try:
        header = json.loads(header_path.read_text())
    except json.JSONDecodeError as err:
        raise ValueError(f"malformed header {header_path}: {err}") from err
    for key in ("shape", "spacing", "dtype", "order"):
        if key not in header:
            raise ValueError(f"malformed header {header_path}: missing {key!r}")
    if header["dtype"] != "f32le":
        raise ValueError(f"{header_path}: unsupported dtype {header['dtype']!r}")
    if header["order"] != "row-major":
        raise ValueError(f"{header_path}: unsupported order {header['order']!r}")
    shape = tuple(int(s) for s in header["shape"])
    spacing = tuple(float(s) for s in header["spacing"])
    if len(shape) != 3 or len(spacing) != 3:
        raise ValueError(f"malformed header {header_path}: shape/spacing not 3D")

    payload = payload_path.read_bytes()
    expected = shape[0] * shape[1] * shape[2] * 4
    if len(payload) != expected:
        raise ValueError(
            f"{payload_path}: payload length mismatch "
            f"({len(payload)} bytes, header implies {expected})")
    data = np.frombuffer(payload, dtype="<f4").astype(np.float32, copy=True)
    return ScalarVolume(shape, spacing, data)


def save_volume(volume: ScalarVolume, path: str | Path) -> None:
    """Write the ``<name>.json`` + ``<name>.raw`` pair for a volume.

    Payload is little-endian float32; a float32 volume round-trips
    bitwise through save/load.
    """
    stem = _volume_stem(path)
    stem.parent.mkdir(parents=True, exist_ok=True)
    header = {
        "shape": list(volume.shape),
        "spacing": list(volume.spacing),
        "dtype": "f32le",
        "order": "row-major",
    }
    stem.with_suffix(HEADER_SUFFIX).write_text(
        json.dumps(header, sort_keys=True) + "\n")
    payload = np.ascontiguousarray(volume.data, dtype="<f4").tobytes()
    stem.with_suffix(PAYLOAD_SUFFIX).write_bytes(payload)


def clamp_probabilities(volume: ScalarVolume) -> ScalarVolume:
    """Clamp values within PROBABILITY_TOLERANCE outside [0, 1]; reject worse."""
    lo = float(volume.data.min())
    hi = float(volume.data.max())
    if lo < -PROBABILITY_TOLERANCE or hi > 1.0 + PROBABILITY_TOLERANCE:
        raise ValueError(
            f"not a probability volume: values span [{lo}, {hi}]")
    if lo >= 0.0 and hi <= 1.0:
        return volume
    return volume.with_data(np.clip(volume.data, 0.0, 1.0))


def load_case(manifest: CaseManifest) -> EnsembleCase:
    """Load and validate all volumes of one case.

    An OOD case without a ground-truth file gets an all-zero mask; an ID
    case without one carries no ground truth.
    """
    members = []
    for p in manifest.member_paths:
        vol = clamp_probabilities(load_volume(p))
        members.append(vol)
    ground_truth = None
    if manifest.gt_path is not None:
        ground_truth = BinaryMask.from_volume(load_volume(manifest.gt_path))
    elif manifest.label == "OOD":
        ref = members[0]
        ground_truth = BinaryMask(
            ref.shape, ref.spacing, np.zeros(ref.shape, dtype=np.uint8))
    return EnsembleCase(manifest.case_id, tuple(members), ground_truth)


def load_manifest(path: str | Path) -> list[CaseManifest]:
    """Read a dataset manifest, resolving paths against its directory.

    A dataset directory is accepted too and resolves to its manifest.json.
    """
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    base = path.parent
    try:
        records = json.loads(path.read_text())
    except json.JSONDecodeError as err:
        raise ValueError(f"malformed manifest {path}: {err}") from err
    _require(isinstance(records, list), f"manifest {path} must be a JSON array")
    manifests = []
    for rec in records:
        manifests.append(CaseManifest(
            case_id=rec["case_id"],
            member_paths=[base / p for p in rec["members"]],
            gt_path=(base / rec["gt"]) if rec.get("gt") else None,
            label=rec.get("label", "ID"),
        ))
    return manifests


def save_manifest(manifests: list[CaseManifest], path: str | Path) -> None:
    """Write a dataset manifest with paths relative to its directory."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    base = path.parent.resolve()

    def rel(p: Path) -> str:
        return Path(p).resolve().relative_to(base).as_posix()

    records = []
    for m in manifests:
        records.append({
            "case_id": m.case_id,
            "members": [rel(p) for p in m.member_paths],
            "gt": rel(m.gt_path) if m.gt_path is not None else None,
            "label": m.label,
        })
    path.write_text(json.dumps(records, indent=2, sort_keys=True) + "\n")
