"""Structure-wise uncertainty scoring for 3D segmentation ensembles.

The package turns an ensemble of probabilistic segmentations into one
uncertainty (or confidence) score per predicted structure, and measures
how useful those scores are for discarding false positives and for
flagging poorly segmented structures.
"""

from swu.experiments import dataset_records, run_experiment
from swu.metrics import (
    EvalReport,
    FrocCurve,
    FrocEntry,
    FrocPoint,
    MatchResult,
    ScoredMatch,
    StructureMatch,
    average_recall,
    dice_coefficient,
    evaluate,
    fp_reduction,
    froc_curve,
    froc_from_entries,
    match_structures,
    spearman_abs,
)
from swu.score_table import ScoreRow, read_score_csv, rows_from_scored, write_score_csv
from swu.structures import (
    DEFAULT_METHOD_IDS,
    Aggregation,
    Method,
    ScoredStructure,
    Structure,
    aggregate,
    binarize,
    connected_components,
    default_methods,
    label_components,
    pairwise_dice_score,
    score_structures,
    structures_from_labels,
)
from swu.synth import (
    Blob,
    SynthCase,
    SynthConfig,
    generate_case,
    generate_dataset,
    ood_companion,
)
from swu.uncertainty import (
    Estimator,
    MethodSpec,
    Orientation,
    average_entropy_map,
    confidence_map,
    entropy_map,
    logit_map,
    mean_prediction,
    mutual_information_map,
    variance_map,
)
from swu.volume_io import (
    BinaryMask,
    CaseManifest,
    EnsembleCase,
    ScalarVolume,
    clamp_probabilities,
    load_case,
    load_manifest,
    load_volume,
    save_manifest,
    save_volume,
)

__version__ = "0.1.0"

__all__ = [
    "Aggregation",
    "BinaryMask",
    "Blob",
    "CaseManifest",
    "DEFAULT_METHOD_IDS",
    "EnsembleCase",
    "Estimator",
    "EvalReport",
    "FrocCurve",
    "FrocEntry",
    "FrocPoint",
    "MatchResult",
    "Method",
    "MethodSpec",
    "Orientation",
    "ScalarVolume",
    "ScoreRow",
    "ScoredMatch",
    "ScoredStructure",
    "Structure",
    "StructureMatch",
    "SynthCase",
    "SynthConfig",
    "aggregate",
    "average_entropy_map",
    "average_recall",
    "binarize",
    "clamp_probabilities",
    "confidence_map",
    "connected_components",
    "dataset_records",
    "default_methods",
    "dice_coefficient",
    "entropy_map",
    "evaluate",
    "fp_reduction",
    "froc_curve",
    "froc_from_entries",
    "generate_case",
    "generate_dataset",
    "label_components",
    "load_case",
    "load_manifest",
    "load_volume",
    "logit_map",
    "match_structures",
    "mean_prediction",
    "mutual_information_map",
    "ood_companion",
    "pairwise_dice_score",
    "read_score_csv",
    "rows_from_scored",
    "run_experiment",
    "save_manifest",
    "save_volume",
    "score_structures",
    "spearman_abs",
    "structures_from_labels",
    "variance_map",
    "write_score_csv",
]
