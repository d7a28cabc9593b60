"""Demand-weighted completeness analytics for knowledge bases.

Learns, from query-usage logs, which relations each class signature needs,
compares frequency / regression / neural predictors of those relation
distributions, and scores entities or KB subsets for completeness against
the predicted demand.
"""

__version__ = "0.1.0"

from .core import (
    ClassSignature,
    RelationDistribution,
    UsageAggregate,
    Vocabulary,
    normalize,
    truncate_to_mass,
)
from .ingestion import (
    EntityFacts,
    KbSnapshot,
    UsageRecord,
    load_kb_snapshot,
    load_usage_log,
)
from .aggregation import (
    FoldAssignment,
    SignatureDataset,
    SignatureRow,
    aggregate,
    assign_folds,
    class_marginals,
    reindex_onto,
)
from .models import (
    FrequencyModel,
    NeuralModel,
    PredictorModel,
    RegressionModel,
    TrainConfig,
    fit,
    fit_frequency,
    fit_neural,
    fit_regression,
    load_model,
    predict_frequency,
    predict_neural,
    predict_regression,
    save_model,
)
from .evaluation import (
    CvResult,
    EvalConfig,
    MetricReport,
    TemporalResult,
    cross_validate,
    intersection_metric,
    temporal_eval,
    weighted_jaccard,
)
from .completeness import (
    CompletenessReport,
    EntityCompleteness,
    GapEntry,
    completeness_report,
    entity_completeness,
    gap_report,
    subset_completeness,
)
from .synthgen import GenConfig, GeneratedData, TruthTable, generate

__all__ = [
    "ClassSignature",
    "CompletenessReport",
    "CvResult",
    "EntityCompleteness",
    "EntityFacts",
    "EvalConfig",
    "FoldAssignment",
    "FrequencyModel",
    "GapEntry",
    "GenConfig",
    "GeneratedData",
    "KbSnapshot",
    "MetricReport",
    "NeuralModel",
    "PredictorModel",
    "RegressionModel",
    "RelationDistribution",
    "SignatureDataset",
    "SignatureRow",
    "TemporalResult",
    "TrainConfig",
    "TruthTable",
    "UsageAggregate",
    "UsageRecord",
    "Vocabulary",
    "aggregate",
    "assign_folds",
    "class_marginals",
    "completeness_report",
    "cross_validate",
    "entity_completeness",
    "fit",
    "fit_frequency",
    "fit_neural",
    "fit_regression",
    "gap_report",
    "generate",
    "intersection_metric",
    "load_kb_snapshot",
    "load_model",
    "load_usage_log",
    "normalize",
    "predict_frequency",
    "predict_neural",
    "predict_regression",
    "reindex_onto",
    "save_model",
    "subset_completeness",
    "temporal_eval",
    "truncate_to_mass",
    "weighted_jaccard",
]
