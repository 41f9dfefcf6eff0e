"""PCA compression of semantic embeddings.

Fitted once per repository on all embeddings; a fitted model is immutable
and safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch

# Eigenvalues at or below this (relative to the largest) count as zero rank.
_RANK_TOL = 1e-10


@dataclass(frozen=True)
class CompressionModel:
    mean: np.ndarray               # length d
    basis: np.ndarray              # d x r, orthonormal columns
    explained_variance: np.ndarray # length r, nonincreasing
    input_dim: int
    output_dim: int
    degenerate: bool = False       # fewer than r strictly positive eigenvalues

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "basis": self.basis.tolist(),
            "explained_variance": self.explained_variance.tolist(),
            "input_dim": self.input_dim,
            "output_dim": self.output_dim,
            "degenerate": self.degenerate,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CompressionModel":
        return cls(
            mean=np.asarray(d["mean"], dtype=float),
            basis=np.asarray(d["basis"], dtype=float),
            explained_variance=np.asarray(d["explained_variance"], dtype=float),
            input_dim=int(d["input_dim"]),
            output_dim=int(d["output_dim"]),
            degenerate=bool(d["degenerate"]),
        )


def _fix_signs(basis: np.ndarray) -> np.ndarray:
    """Flip column signs so each column's largest-magnitude coordinate is
    positive. Makes snapshots byte-stable across runs and BLAS variants."""
    out = basis.copy()
    for j in range(out.shape[1]):
        col = out[:, j]
        k = int(np.argmax(np.abs(col)))
        if col[k] < 0:
            out[:, j] = -col
    return out


def fit_compression(embeddings, r: int) -> CompressionModel:
    """Fit a top-r PCA on the given embedding vectors.

    Covariance uses the n-1 normalization, so projected training coordinates
    have sample variance equal to explained_variance. When the covariance has
    fewer than r strictly positive eigenvalues the model is still returned,
    flagged degenerate, with the trailing variances clamped to 0.
    """
    X = np.asarray(embeddings, dtype=float)
    if X.ndim != 2:
        raise ValueError("embeddings must be a 2-D array-like (n x d)")
    n, d = X.shape
    if n < 2:
        raise ValueError(f"need at least 2 vectors to fit, got {n}")
    if not 1 <= r <= min(d, n - 1):
        raise ValueError(f"r={r} outside valid range [1, {min(d, n - 1)}]")

    mean = X.mean(axis=0)
    centered = X - mean
    cov = centered.T @ centered / (n - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals = eigvals[order][:r]
    basis = _fix_signs(eigvecs[:, order][:, :r])

    positive = eigvals > _RANK_TOL * max(float(eigvals[0]), 1.0)
    degenerate = int(positive.sum()) < r
    eigvals = np.where(eigvals > 0.0, eigvals, 0.0)

    return CompressionModel(
        mean=mean,
        basis=basis,
        explained_variance=eigvals,
        input_dim=d,
        output_dim=r,
        degenerate=degenerate,
    )


def compress(model: CompressionModel, v) -> np.ndarray:
    """Project one vector (or a stack of vectors) onto the fitted basis."""
    arr = np.asarray(v, dtype=float)
    if arr.shape[-1] != model.input_dim:
        raise DimensionMismatch(
            f"expected vectors of length {model.input_dim}, got {arr.shape[-1]}"
        )
    return (arr - model.mean) @ model.basis


def reconstruct(model: CompressionModel, z) -> np.ndarray:
    """Map compressed coordinates back to the original space."""
    arr = np.asarray(z, dtype=float)
    if arr.shape[-1] != model.output_dim:
        raise DimensionMismatch(
            f"expected compressed vectors of length {model.output_dim}, got {arr.shape[-1]}"
        )
    return arr @ model.basis.T + model.mean
