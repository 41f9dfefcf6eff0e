"""End-to-end orchestration: fit compression, prototypes, and the per-group
threshold-estimator cache; turn (text, embedding, logprobs, score) into a
verdict with provenance."""

from __future__ import annotations

import json
import os
import threading
import zlib
from collections import OrderedDict
from dataclasses import asdict, dataclass

import numpy as np

from . import estimator, router
from .compression import CompressionModel, compress
from .errors import ParseError, VersionError
from .estimator import FEATURE_GROUPS
from .features import TokenSequence, extract_conditions, tokenize
from .repository import Repository, SrrSample, with_compression_dim

SCHEMA_VERSION = 1
ROUTER_MODES = ("m_nearest", "classification", "disabled")
CTE_KINDS = ("logistic", "boosted")


@dataclass(frozen=True)
class PipelineConfig:
    k: int = router.DEFAULT_K
    m: int = router.DEFAULT_M
    momentum: float = router.DEFAULT_MOMENTUM
    epochs: int = router.DEFAULT_EPOCHS
    cte_kind: str = "logistic"
    router_mode: str = "m_nearest"
    feature_mask: tuple = FEATURE_GROUPS
    r: int = 32
    seed: int = 0
    epsilon: float = router.DEFAULT_EPSILON
    sinkhorn_max_iter: int = router.DEFAULT_MAX_ITER
    sinkhorn_tol: float = router.DEFAULT_TOL
    l2: float = estimator.DEFAULT_L2
    tree_depth: int = 6
    n_trees: int = 100
    eta: float = 0.1
    reg_lambda: float = 1.0
    reg_gamma: float = 0.0
    min_child_weight: float = 1.0
    early_stopping_fraction: float = 0.2
    early_stopping_patience: int = 10
    score_as_feature: bool = False
    cache_size: int = 256

    def __post_init__(self):
        object.__setattr__(self, "feature_mask", tuple(self.feature_mask))
        if self.router_mode not in ROUTER_MODES:
            raise ValueError(f"router_mode must be one of {ROUTER_MODES}")
        if self.cte_kind not in CTE_KINDS:
            raise ValueError(f"cte_kind must be one of {CTE_KINDS}")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.m < 1:
            raise ValueError("m must be >= 1")
        unknown = set(self.feature_mask) - set(FEATURE_GROUPS)
        if unknown:
            raise ValueError(f"unknown feature groups: {sorted(unknown)}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["feature_mask"] = list(self.feature_mask)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        d = dict(d)
        d["feature_mask"] = tuple(d["feature_mask"])
        return cls(**d)


@dataclass(frozen=True)
class Verdict:
    label: int
    probability: float
    confidence: float
    threshold_estimate: float
    threshold_variance: float | None
    activation: router.Activation

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "probability": self.probability,
            "confidence": self.confidence,
            "threshold_estimate": self.threshold_estimate,
            "threshold_variance": self.threshold_variance,
            "activated_prototypes": [
                {"style": s, "prototype": k, "distance": d}
                for s, k, d in self.activation.prototype_refs
            ],
        }


class PipelineModel:
    """A fitted pipeline. Immutable except for the bounded CTE cache, which
    fills under a lock and is read concurrently."""

    def __init__(self, repository: Repository, config: PipelineConfig, indexes):
        self.repository = repository
        self.config = config
        self.indexes = tuple(indexes)
        self._cache = OrderedDict()
        self._lock = threading.Lock()

    # -- routing ------------------------------------------------------------

    def _route(self, semantic: np.ndarray) -> router.Activation:
        mode = self.config.router_mode
        if mode == "classification":
            return router.route_by_classification(self.indexes, semantic)
        total = sum(idx.prototypes.shape[1] for idx in self.indexes)
        m = min(self.config.m, total) if mode == "m_nearest" else total
        activation = router.route(self.indexes, semantic, m=m)
        # A prototype group can be single-class on skewed data; widen until
        # the activated set is fittable.
        by_id = {s.id: s for s in self.repository.samples}
        while m < total and len(
            {by_id[i].label for i in activation.sample_ids}
        ) < 2:
            m += 1
            activation = router.route(self.indexes, semantic, m=m)
        return activation

    # -- CTE cache ----------------------------------------------------------

    def _cte_for(self, activation: router.Activation):
        key = (
            tuple(sorted((s, k) for s, k, _ in activation.prototype_refs)),
            self.config.feature_mask,
            self.config.cte_kind,
        )
        with self._lock:
            if key in self._cache:
                self._cache.move_to_end(key)
                return self._cache[key]
        model = self._fit_cte(activation)
        with self._lock:
            self._cache[key] = model
            self._cache.move_to_end(key)
            while len(self._cache) > self.config.cache_size:
                self._cache.popitem(last=False)
        return model

    def _fit_cte(self, activation: router.Activation):
        by_id = self.repository._index()
        samples = [by_id[i] for i in activation.sample_ids]
        data = estimator.build_feature_matrix(samples, self.config.feature_mask)
        if self.config.cte_kind == "logistic":
            return estimator.fit_logistic(data, l2=self.config.l2)
        key = ",".join(f"{s}:{k}" for s, k, _ in activation.prototype_refs)
        fit_seed = (zlib.crc32(key.encode()) ^ self.config.seed) & 0x7FFFFFFF
        return estimator.fit_boosted(
            data,
            depth=self.config.tree_depth,
            n_trees=self.config.n_trees,
            eta=self.config.eta,
            reg_lambda=self.config.reg_lambda,
            reg_gamma=self.config.reg_gamma,
            min_child_weight=self.config.min_child_weight,
            early_stopping_fraction=self.config.early_stopping_fraction,
            early_stopping_patience=self.config.early_stopping_patience,
            seed=fit_seed,
            score_as_feature=self.config.score_as_feature,
        )

    # -- detection ----------------------------------------------------------

    def detect(self, text: str, embedding, token_logprobs, score: float) -> Verdict:
        emb = np.asarray(embedding, dtype=float)
        semantic = compress(self.repository.compression, emb)
        seq = TokenSequence(
            tokens=tokenize(text, case_fold=self.repository.case_fold).tokens,
            logprobs=tuple(float(x) for x in token_logprobs),
        )
        conditions = extract_conditions(seq, semantic)
        activation = self._route(semantic)
        cte = self._cte_for(activation)
        row = estimator.condition_row(conditions, self.config.feature_mask)
        if self.config.cte_kind == "logistic":
            p, threshold = estimator.predict(cte, row, score)
            variance = estimator.threshold_variance(cte, row, cte.n_train)
        else:
            p, threshold = estimator.predict(cte, row[:-1], score)
            variance = None
        label = 1 if p > 0.5 else 0  # the boundary resolves to AI
        return Verdict(
            label=label,
            probability=p,
            confidence=max(p, 1.0 - p),
            threshold_estimate=threshold,
            threshold_variance=variance,
            activation=activation,
        )


def _style_seed(seed: int, style_position: int) -> int:
    return int(np.random.SeedSequence([seed, style_position]).generate_state(1)[0])


def fit_pipeline(repo: Repository, config: PipelineConfig) -> PipelineModel:
    """Fit routing structures over a repository; the CTE cache starts empty."""
    if config.r != repo.compression.output_dim:
        repo = with_compression_dim(repo, config.r)

    for style in repo.styles:
        labels = {s.label for s in repo.of_style(style)}
        if len(labels) < 2 and config.router_mode != "disabled":
            raise ValueError(
                f"style '{style}' lacks one of the label classes; cannot fit CTEs"
            )
    if len({s.label for s in repo.samples}) < 2:
        raise ValueError("repository needs both label classes")

    if config.router_mode == "disabled":
        semantics = np.stack(
            [np.asarray(s.conditions.semantic, dtype=float) for s in repo.samples]
        )
        pseudo = router.StyleIndex(
            style="__all__",
            prototypes=semantics.mean(axis=0)[:, None],
            members=(tuple(s.id for s in repo.samples),),
            assignment=np.full((1, len(repo.samples)), 1.0 / len(repo.samples)),
            sample_ids=tuple(s.id for s in repo.samples),
        )
        return PipelineModel(repo, config, [pseudo])

    indexes = []
    for position, style in enumerate(repo.styles):
        indexes.append(
            router.fit_prototypes(
                repo,
                style,
                K=config.k,
                momentum=config.momentum,
                epochs=config.epochs,
                seed=_style_seed(config.seed, position),
                epsilon=config.epsilon,
                max_iter=config.sinkhorn_max_iter,
                tol=config.sinkhorn_tol,
            )
        )
    return PipelineModel(repo, config, indexes)


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def snapshot(model: PipelineModel, path) -> None:
    """Write the fitted pipeline (repository inline) as one JSON document."""
    doc = {
        "schema_version": SCHEMA_VERSION,
        "config": model.config.to_dict(),
        "repository": {
            "embedding_dim": model.repository.embedding_dim,
            "case_fold": model.repository.case_fold,
            "compression": model.repository.compression.to_dict(),
            "samples": [s.to_dict() for s in model.repository.samples],
        },
        "indexes": [idx.to_dict() for idx in model.indexes],
    }
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True)
    os.replace(tmp, path)


def load_pipeline(path) -> PipelineModel:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"pipeline snapshot is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "schema_version" not in doc:
        raise ParseError("pipeline snapshot missing schema_version")
    if doc["schema_version"] != SCHEMA_VERSION:
        raise VersionError(
            f"unsupported schema_version {doc['schema_version']!r}"
        )
    try:
        rep = doc["repository"]
        samples = tuple(SrrSample.from_dict(d) for d in rep["samples"])
        repo = Repository(
            samples=samples,
            embedding_dim=int(rep["embedding_dim"]),
            compression=CompressionModel.from_dict(rep["compression"]),
            styles=tuple(sorted({s.style for s in samples})),
            case_fold=bool(rep.get("case_fold", True)),
        )
        config = PipelineConfig.from_dict(doc["config"])
        indexes = [router.StyleIndex.from_dict(d) for d in doc["indexes"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"pipeline snapshot structurally broken: {exc}") from exc
    return PipelineModel(repo, config, indexes)
