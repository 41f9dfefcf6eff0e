"""The labeled reference repository: ingest, validation, persistence.

Samples are stored sorted by id so that building from the same records in
any order yields an identical repository (float reductions included).
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, replace

import numpy as np

from .compression import CompressionModel, compress, fit_compression
from .errors import (
    DuplicateId,
    InconsistentEmbeddingDim,
    ParseError,
    SchemaError,
    VersionError,
)
from .features import ConditionVector, TokenSequence, extract_conditions, tokenize

SCHEMA_VERSION = 1

_REQUIRED_FIELDS = {
    "id": str,
    "text": str,
    "label": int,
    "style": str,
    "embedding": list,
    "token_logprobs": list,
    "score": (int, float),
}


@dataclass(frozen=True)
class SrrSample:
    id: str
    text: str
    label: int                 # 1 = human-written, 0 = AI-generated
    style: str
    embedding: np.ndarray
    token_logprobs: tuple
    score: float
    conditions: ConditionVector

    def to_dict(self) -> dict:
        c = self.conditions
        return {
            "id": self.id,
            "text": self.text,
            "label": self.label,
            "style": self.style,
            "embedding": self.embedding.tolist(),
            "token_logprobs": list(self.token_logprobs),
            "score": self.score,
            "conditions": {
                "text_length": c.text_length,
                "logprob_mean": c.logprob_mean,
                "logprob_var": c.logprob_var,
                "rep2": c.rep2,
                "rep3": c.rep3,
                "ttr": c.ttr,
                "semantic": np.asarray(c.semantic).tolist(),
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SrrSample":
        c = d["conditions"]
        return cls(
            id=d["id"],
            text=d["text"],
            label=int(d["label"]),
            style=d["style"],
            embedding=np.asarray(d["embedding"], dtype=float),
            token_logprobs=tuple(d["token_logprobs"]),
            score=float(d["score"]),
            conditions=ConditionVector(
                text_length=int(c["text_length"]),
                logprob_mean=float(c["logprob_mean"]),
                logprob_var=float(c["logprob_var"]),
                rep2=float(c["rep2"]),
                rep3=float(c["rep3"]),
                ttr=float(c["ttr"]),
                semantic=np.asarray(c["semantic"], dtype=float),
            ),
        )


@dataclass(frozen=True)
class Repository:
    samples: tuple          # SrrSample, sorted by id
    embedding_dim: int
    compression: CompressionModel
    styles: tuple           # sorted style tags
    case_fold: bool = True

    def __len__(self):
        return len(self.samples)

    def by_id(self, sample_id: str) -> SrrSample:
        return self._index()[sample_id]

    def _index(self) -> dict:
        if not hasattr(self, "_id_index"):
            object.__setattr__(self, "_id_index", {s.id: s for s in self.samples})
        return self._id_index

    def of_style(self, style: str) -> list:
        return [s for s in self.samples if s.style == style]


def _validate_record(rec: dict, line: int) -> None:
    if not isinstance(rec, dict):
        raise SchemaError("record is not a JSON object", line=line)
    for name, typ in _REQUIRED_FIELDS.items():
        if name not in rec:
            raise SchemaError(f"missing field '{name}'", line=line, field=name)
        value = rec[name]
        if name == "label":
            if value not in (0, 1):
                raise SchemaError(
                    f"field 'label' must be 0 or 1, got {value!r}", line=line, field=name
                )
        elif not isinstance(value, typ) or isinstance(value, bool):
            raise SchemaError(
                f"field '{name}' has wrong type {type(value).__name__}",
                line=line,
                field=name,
            )
    for name in ("embedding", "token_logprobs"):
        vals = rec[name]
        if not vals or not all(
            isinstance(x, (int, float)) and not isinstance(x, bool) for x in vals
        ):
            raise SchemaError(
                f"field '{name}' must be a nonempty list of numbers",
                line=line,
                field=name,
            )
    if not all(math.isfinite(float(x)) for x in rec["embedding"]):
        raise SchemaError("non-finite embedding entry", line=line, field="embedding")
    if any(not math.isfinite(float(x)) or x > 0 for x in rec["token_logprobs"]):
        raise SchemaError(
            "token_logprobs entries must be finite and <= 0",
            line=line,
            field="token_logprobs",
        )
    if not math.isfinite(float(rec["score"])):
        raise SchemaError("non-finite score", line=line, field="score")


def ingest(records, r: int, case_fold: bool = True) -> Repository:
    """Build a validated repository from raw ingest records.

    `records` is an iterable of dicts following the ingest JSONL schema.
    Fits the PCA compression on all embeddings, then computes every sample's
    condition vector. Records with non-finite derived features are rejected.
    """
    staged = []
    seen = set()
    dim = None
    for line, rec in enumerate(records, start=1):
        _validate_record(rec, line)
        if rec["id"] in seen:
            raise DuplicateId(f"duplicate id '{rec['id']}'", line=line, field="id")
        seen.add(rec["id"])
        emb = np.asarray(rec["embedding"], dtype=float)
        if dim is None:
            dim = emb.shape[0]
        elif emb.shape[0] != dim:
            raise InconsistentEmbeddingDim(
                f"embedding length {emb.shape[0]} != {dim}", line=line, field="embedding"
            )
        tokens = tokenize(rec["text"], case_fold=case_fold).tokens
        lp = tuple(float(x) for x in rec["token_logprobs"])
        # Bridge tokenizers rarely match ours; token features come from our
        # tokens, logprob moments from the bridge stream as supplied.
        seq = TokenSequence(tokens=tokens, logprobs=lp)
        staged.append((rec, seq, emb, line))

    if not staged:
        raise SchemaError("no records to ingest", line=0)
    staged.sort(key=lambda item: item[0]["id"])

    model = fit_compression(np.stack([emb for _, _, emb, _ in staged]), r)

    samples = []
    for rec, seq, emb, line in staged:
        cond = extract_conditions(seq, compress(model, emb))
        values = cond.full()
        if not np.all(np.isfinite(values)):
            raise SchemaError(
                "record yields non-finite feature values", line=line
            )
        samples.append(
            SrrSample(
                id=rec["id"],
                text=rec["text"],
                label=int(rec["label"]),
                style=rec["style"],
                embedding=emb,
                token_logprobs=seq.logprobs,
                score=float(rec["score"]),
                conditions=cond,
            )
        )

    styles = tuple(sorted({s.style for s in samples}))
    return Repository(
        samples=tuple(samples),
        embedding_dim=dim,
        compression=model,
        styles=styles,
        case_fold=case_fold,
    )


def read_jsonl(path) -> list:
    """Parse a JSONL file into records, reporting the offending line on error."""
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise SchemaError(f"invalid JSON: {exc.msg}", line=line_no) from exc
    return records


def with_compression_dim(repo: Repository, r: int) -> Repository:
    """A copy of the repository with its PCA refit to a new output dimension."""
    if r == repo.compression.output_dim:
        return repo
    model = fit_compression(np.stack([s.embedding for s in repo.samples]), r)
    samples = tuple(
        replace(
            s,
            conditions=replace(
                s.conditions, semantic=compress(model, s.embedding)
            ),
        )
        for s in repo.samples
    )
    return Repository(
        samples=samples,
        embedding_dim=repo.embedding_dim,
        compression=model,
        styles=repo.styles,
        case_fold=repo.case_fold,
    )


def snapshot(repo: Repository, path) -> None:
    """Write the repository as a single JSON document (atomic replace)."""
    doc = {
        "schema_version": SCHEMA_VERSION,
        "embedding_dim": repo.embedding_dim,
        "case_fold": repo.case_fold,
        "compression": repo.compression.to_dict(),
        "samples": [s.to_dict() for s in repo.samples],
    }
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True)
    os.replace(tmp, path)


def load(path) -> Repository:
    """Load a repository snapshot. Truncated or mistyped files raise ParseError;
    unknown schema versions raise VersionError."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"snapshot is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "schema_version" not in doc:
        raise ParseError("snapshot missing schema_version")
    if doc["schema_version"] != SCHEMA_VERSION:
        raise VersionError(
            f"unsupported schema_version {doc['schema_version']!r} "
            f"(expected {SCHEMA_VERSION})"
        )
    try:
        samples = tuple(SrrSample.from_dict(d) for d in doc["samples"])
        return Repository(
            samples=samples,
            embedding_dim=int(doc["embedding_dim"]),
            compression=CompressionModel.from_dict(doc["compression"]),
            styles=tuple(sorted({s.style for s in samples})),
            case_fold=bool(doc.get("case_fold", True)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"snapshot structurally broken: {exc}") from exc
