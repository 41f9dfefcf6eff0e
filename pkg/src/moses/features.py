"""Surface-level and diversity features computed from tokenized text.

All features are derived from a whitespace token sequence plus externally
supplied per-token natural-log probabilities; no model is ever run here.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyText, MissingLogprobs

#: Names of the six scalar conditions, in feature-matrix column order.
SCALAR_CONDITIONS = (
    "text_length",
    "logprob_mean",
    "logprob_var",
    "rep2",
    "rep3",
    "ttr",
)


@dataclass(frozen=True)
class TokenSequence:
    """An ordered token list with optional token log-probabilities.

    Logprobs normally align one-to-one with the tokens, but ingested records
    may carry a stream from a different tokenizer; log-probability moments
    are always taken over the logprob list's own length.
    """

    tokens: tuple
    logprobs: tuple | None = None

    def __len__(self):
        return len(self.tokens)


@dataclass(frozen=True)
class ConditionVector:
    """The conditional feature set: six scalar conditions plus the compressed
    semantic block."""

    text_length: int
    logprob_mean: float
    logprob_var: float
    rep2: float
    rep3: float
    ttr: float
    semantic: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def scalars(self) -> np.ndarray:
        """The six scalar conditions in canonical order."""
        return np.array(
            [
                float(self.text_length),
                self.logprob_mean,
                self.logprob_var,
                self.rep2,
                self.rep3,
                self.ttr,
            ]
        )

    def full(self) -> np.ndarray:
        """Scalar conditions followed by the semantic block."""
        return np.concatenate([self.scalars(), np.asarray(self.semantic, dtype=float)])


def tokenize(text: str, case_fold: bool = True) -> TokenSequence:
    """Split on Unicode whitespace, optionally case-folding first.

    Raises EmptyText when nothing remains after splitting.
    """
    if case_fold:
        text = text.casefold()
    tokens = text.split()
    if not tokens:
        raise EmptyText("text contains no tokens after whitespace splitting")
    return TokenSequence(tokens=tuple(tokens))


def ngram_repetition(seq: TokenSequence, n: int) -> float:
    """Fraction of distinct n-grams occurring more than once.

    Sequences shorter than n have no n-grams and score 0.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    tokens = seq.tokens
    if len(tokens) < n:
        return 0.0
    counts = Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))
    repeated = sum(1 for c in counts.values() if c > 1)
    return repeated / len(counts)


def type_token_ratio(seq: TokenSequence) -> float:
    """Distinct-token count over the square root of total tokens."""
    return len(set(seq.tokens)) / math.sqrt(len(seq.tokens))


def extract_conditions(seq: TokenSequence, semantic: np.ndarray) -> ConditionVector:
    """Compute the full condition vector for one sample.

    `semantic` must already be compressed to the repository's configured
    dimension. Log-probability moments use population variance (divide by L).
    """
    if len(seq) == 0:
        raise EmptyText("cannot extract conditions from an empty sequence")
    if seq.logprobs is None:
        raise MissingLogprobs("sample carries no token log-probabilities")
    lp = np.asarray(seq.logprobs, dtype=float)
    mean = float(lp.mean())
    var = float(np.mean((lp - mean) ** 2))
    return ConditionVector(
        text_length=len(seq),
        logprob_mean=mean,
        logprob_var=var,
        rep2=ngram_repetition(seq, 2),
        rep3=ngram_repetition(seq, 3),
        ttr=type_token_ratio(seq),
        semantic=np.asarray(semantic, dtype=float),
    )
