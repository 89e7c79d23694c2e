"""In-memory experiment harness: generate, score, match, evaluate.

The CLI pipeline does the same work through files; this module keeps
everything in memory so sweeps over seeds and generator settings stay
fast. Results are identical to the file-based route because both call
the same scoring and evaluation functions.
"""

from __future__ import annotations

from swu.metrics import EvalReport, ScoredMatch, evaluate, match_structures
from swu.structures import Method, connected_components, score_structures
from swu.synth import SynthConfig, generate_case


def dataset_records(config: SynthConfig, methods: list[Method],
                    threshold: float = 0.5, connectivity: int = 26,
                    min_iou: float = 0.0) -> tuple[list[ScoredMatch], int, int]:
    """Score and match every case of one generated dataset.

    Returns the matched records plus the case and ground-truth structure
    counts needed by the evaluator.
    """
    records: list[ScoredMatch] = []
    n_gt = 0
    for index in range(config.n_cases):
        sc = generate_case(config, index)
        case = sc.case
        scored = score_structures(case, methods, threshold, connectivity)
        gt_structures = connected_components(case.ground_truth, connectivity)
        n_gt += len(gt_structures)
        by_basis: dict[str, list] = {}
        for s in scored:
            by_basis.setdefault(s.basis, []).append(s)
        for basis, items in by_basis.items():
            match = match_structures([s.structure for s in items],
                                     gt_structures, min_iou)
            by_label = match.by_pred_label()
            for s in items:
                m = by_label[s.structure.label]
                gt_ref = (case.case_id, m.matched_gt_label) if m.is_tp else None
                records.append(ScoredMatch(
                    case_id=case.case_id,
                    basis=basis,
                    structure_label=s.structure.label,
                    is_tp=m.is_tp,
                    dice=m.dice,
                    gt_ref=gt_ref,
                    scores=s.scores,
                ))
    return records, config.n_cases, n_gt


def run_experiment(configs: list[SynthConfig], methods: list[Method],
                   threshold: float = 0.5, connectivity: int = 26,
                   min_iou: float = 0.0,
                   dataset_id: str = "experiment") -> dict[str, EvalReport]:
    """Evaluate all methods over the union of the given datasets.

    Case ids must be unique across configs (give each config its own
    name), so in-distribution and out-of-distribution datasets can be
    pooled into one split.
    """
    if len({cfg.name for cfg in configs}) != len(configs):
        raise ValueError("experiment configs must have distinct names")
    records: list[ScoredMatch] = []
    n_cases = n_gt = 0
    for config in configs:
        r, c, g = dataset_records(config, methods, threshold, connectivity,
                                  min_iou)
        records.extend(r)
        n_cases += c
        n_gt += g
    return evaluate(records, methods, n_cases, n_gt, dataset_id)
