"""Stylistics-conditional AI-text detection.

Pipeline: a labeled reference repository with linguistic condition
annotations, an optimal-transport prototype router over the compressed
embedding space, and conditional threshold estimators that turn raw
discrimination scores into calibrated verdicts with confidence.
"""

from .baselines import StaticThreshold, fit_static, nearest_vote
from .compression import CompressionModel, compress, fit_compression
from .estimator import (
    BoostedCte,
    FeatureMatrix,
    LogisticCte,
    attribute,
    build_feature_matrix,
    fit_boosted,
    fit_logistic,
    predict,
    threshold_variance,
)
from .evaluation import EvalReport, evaluate, mcnemar, run_suite, style_report
from .features import (
    ConditionVector,
    TokenSequence,
    extract_conditions,
    ngram_repetition,
    tokenize,
)
from .pipeline import (
    PipelineConfig,
    PipelineModel,
    Verdict,
    fit_pipeline,
    load_pipeline,
)
from .pipeline import snapshot as snapshot_pipeline
from .repository import Repository, SrrSample, ingest
from .repository import load as load_repository
from .repository import snapshot as snapshot_repository
from .router import (
    Activation,
    StyleIndex,
    fit_prototypes,
    route,
    route_by_classification,
    sinkhorn_assign,
)
from .synth import synth_benchmark

__version__ = "0.1.0"
