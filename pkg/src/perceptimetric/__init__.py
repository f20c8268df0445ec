"""Toolkit for scoring speech representations against human phone discrimination."""

__version__ = "0.1.0"

from .abx import (
    ContrastScore,
    DeltaRecord,
    TripletItem,
    abx_scores,
    evaluate_deltas,
    load_items,
    native_nonnative_abx_diff,
)
from .dtw import AlignmentCost, DeltaValue, cosine_distance, delta, dtw_cost
from .featio import (
    AudioBuffer,
    FeatureArchive,
    FeatureMatrix,
    MfccConfig,
    compute_mfcc,
    read_archive,
    read_wav,
    resample_linear,
    write_archive,
)
from .stats import (
    DesignMatrix,
    HumanResponse,
    MetricReport,
    ProbitFit,
    aggregate,
    bootstrap,
    build_design_matrix,
    fit_probit_lasso,
    load_responses,
    log_likelihood,
    native_effect,
    pairwise_significance,
    pearson,
    select_lambda_cv,
    spearman,
)

__all__ = [
    "AlignmentCost",
    "AudioBuffer",
    "ContrastScore",
    "DeltaRecord",
    "DeltaValue",
    "DesignMatrix",
    "FeatureArchive",
    "FeatureMatrix",
    "HumanResponse",
    "MetricReport",
    "MfccConfig",
    "ProbitFit",
    "TripletItem",
    "abx_scores",
    "aggregate",
    "bootstrap",
    "build_design_matrix",
    "compute_mfcc",
    "cosine_distance",
    "delta",
    "dtw_cost",
    "evaluate_deltas",
    "fit_probit_lasso",
    "load_items",
    "load_responses",
    "log_likelihood",
    "native_effect",
    "native_nonnative_abx_diff",
    "pairwise_significance",
    "pearson",
    "read_archive",
    "read_wav",
    "resample_linear",
    "select_lambda_cv",
    "spearman",
    "write_archive",
]
