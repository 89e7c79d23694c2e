"""CSV serialization of per-structure score tables.

One row per (case, basis, structure). Fixed leading columns identify the
structure, one column per method id carries its score, and the trailing
``label`` column records the case provenance (ID or OOD). A structure
only has scores for methods sharing its extraction basis; other method
cells stay empty.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

from swu.structures import Method, ScoredStructure

FIXED_COLUMNS = ("case_id", "basis", "structure_label", "volume_voxels")
LABEL_COLUMN = "label"


@dataclass
class ScoreRow:
    """One structure's row of the score table."""

    case_id: str
    basis: str
    structure_label: int
    volume_voxels: int
    label: str
    scores: dict[str, float] = field(default_factory=dict)


def rows_from_scored(scored: list[ScoredStructure], label: str) -> list[ScoreRow]:
    return [
        ScoreRow(
            case_id=s.case_id,
            basis=s.basis,
            structure_label=s.structure.label,
            volume_voxels=s.structure.volume_voxels,
            label=label,
            scores=dict(s.scores),
        )
        for s in scored
    ]


def write_score_csv(rows: list[ScoreRow], method_ids: list[str],
                    path: str | Path) -> None:
    """Write the score table; column order is fixed columns, method ids in
    the given order, then the provenance label."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = list(FIXED_COLUMNS) + list(method_ids) + [LABEL_COLUMN]
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            record = [row.case_id, row.basis, row.structure_label,
                      row.volume_voxels]
            for mid in method_ids:
                value = row.scores.get(mid)
                record.append("" if value is None else repr(value))
            record.append(row.label)
            writer.writerow(record)


def read_score_csv(path: str | Path) -> tuple[list[ScoreRow], list[Method]]:
    """Read a score table back; method columns are parsed so each score's
    orientation is recoverable from its column name."""
    path = Path(path)
    with open(path, newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty score table") from None
        if header[: len(FIXED_COLUMNS)] != list(FIXED_COLUMNS) \
                or not header or header[-1] != LABEL_COLUMN:
            raise ValueError(f"{path}: unrecognized score table header")
        method_columns = header[len(FIXED_COLUMNS):-1]
        try:
            methods = [Method.parse(c) for c in method_columns]
        except ValueError as exc:
            raise ValueError(
                f"{path}: cannot derive score orientation: {exc}") from None
        rows = []
        for record in reader:
            if not record:
                continue
            scores = {}
            for mid, cell in zip(method_columns, record[len(FIXED_COLUMNS):-1]):
                if cell != "":
                    scores[mid] = float(cell)
            rows.append(ScoreRow(
                case_id=record[0],
                basis=record[1],
                structure_label=int(record[2]),
                volume_voxels=int(record[3]),
                label=record[-1],
                scores=scores,
            ))
    return rows, methods
