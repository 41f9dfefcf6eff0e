"""Prototype routing over the compressed-embedding latent space.

Each style's samples are clustered into K prototypes by entropic optimal
transport (Sinkhorn-Knopp with uniform marginals), prototypes are refined
with a momentum update, and queries activate the reference groups of their
m nearest prototypes pooled across all styles.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyIndex, TooFewSamples

DEFAULT_EPSILON = 0.05
DEFAULT_K = 8
DEFAULT_M = 3
DEFAULT_MOMENTUM = 0.9
DEFAULT_EPOCHS = 10
DEFAULT_MAX_ITER = 100
DEFAULT_TOL = 1e-6


@dataclass(frozen=True)
class SinkhornResult:
    plan: np.ndarray        # K x N, entries >= 0
    converged: bool
    iterations: int
    max_violation: float    # worst marginal violation at exit


@dataclass(frozen=True)
class StyleIndex:
    style: str
    prototypes: np.ndarray  # r x K
    members: tuple          # K tuples of sample ids
    assignment: np.ndarray  # K x N relaxed transport plan
    sample_ids: tuple       # column order of `assignment`
    converged: bool = True

    def to_dict(self) -> dict:
        return {
            "style": self.style,
            "prototypes": self.prototypes.tolist(),
            "members": [list(m) for m in self.members],
            "assignment": self.assignment.tolist(),
            "sample_ids": list(self.sample_ids),
            "converged": self.converged,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StyleIndex":
        return cls(
            style=d["style"],
            prototypes=np.asarray(d["prototypes"], dtype=float),
            members=tuple(tuple(m) for m in d["members"]),
            assignment=np.asarray(d["assignment"], dtype=float),
            sample_ids=tuple(d["sample_ids"]),
            converged=bool(d["converged"]),
        )


@dataclass(frozen=True)
class Activation:
    """Provenance of one routing decision."""

    prototype_refs: tuple   # ((style, prototype index, distance), ...) nondecreasing
    sample_ids: tuple


def _logsumexp(a: np.ndarray, axis: int) -> np.ndarray:
    peak = a.max(axis=axis, keepdims=True)
    return (peak + np.log(np.exp(a - peak).sum(axis=axis, keepdims=True))).squeeze(axis)


def sinkhorn_assign(
    X: np.ndarray,
    P: np.ndarray,
    epsilon: float = DEFAULT_EPSILON,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
) -> SinkhornResult:
    """Relaxed transport plan Q = diag(a) exp(P'X / eps) diag(b).

    X is r x N (samples as columns), P is r x K. Scaling vectors are iterated
    in the log domain until each row sums to 1/K and each column to 1/N
    within `tol`; at small epsilon the iteration is warm-started through a
    halving epsilon schedule, which costs a few extra sweeps but removes the
    slow tail of the plain iteration. max_iter budgets the final stage.
    Non-convergence is reported on the result, not raised.
    """
    X = np.asarray(X, dtype=float)
    P = np.asarray(P, dtype=float)
    r, N = X.shape
    K = P.shape[1]
    if not (N >= K >= 1):
        raise ValueError(f"need N >= K >= 1, got N={N}, K={K}")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")

    S = P.T @ X                          # K x N similarity
    log_row = -np.log(K)                 # target row mass
    log_col = -np.log(N)                 # target column mass

    # dual potentials in cost units, shared across the epsilon schedule
    f = np.zeros(K)
    g = np.zeros(N)

    schedule = []
    eps_k = max(epsilon, 1.0)
    while eps_k > 1.999 * epsilon:
        schedule.append(eps_k)
        eps_k /= 2.0
    for eps_k in schedule:
        M = S / eps_k
        u = f / eps_k
        v = g / eps_k
        for _ in range(25):
            u = log_row - _logsumexp(M + v[None, :], axis=1)
            v = log_col - _logsumexp(M + u[:, None], axis=0)
        f = eps_k * u
        g = eps_k * v

    M = S / epsilon
    u = f / epsilon
    v = g / epsilon
    converged = False
    violation = np.inf
    it = 0
    check_every = 8  # violation check costs as much as a sweep
    for it in range(1, max_iter + 1):
        u = log_row - _logsumexp(M + v[None, :], axis=1)
        v = log_col - _logsumexp(M + u[:, None], axis=0)
        if it % check_every and it != max_iter:
            continue
        Q = np.exp(M + u[:, None] + v[None, :])
        row_violation = np.abs(Q.sum(axis=1) - 1.0 / K).max()
        col_violation = np.abs(Q.sum(axis=0) - 1.0 / N).max()
        violation = max(row_violation, col_violation)
        if violation < tol:
            converged = True
            break

    Q = np.exp(M + u[:, None] + v[None, :])
    return SinkhornResult(
        plan=Q, converged=converged, iterations=it, max_violation=float(violation)
    )


def _harden(Q: np.ndarray) -> np.ndarray:
    """Argmax cluster index per column."""
    return Q.argmax(axis=0)


def _fix_empty_clusters(
    X: np.ndarray, P: np.ndarray, hard: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Re-seed every empty cluster's prototype to the sample currently
    farthest from its own prototype, and claim that sample."""
    K = P.shape[1]
    P = P.copy()
    hard = hard.copy()
    for k in range(K):
        if np.any(hard == k):
            continue
        dists = np.linalg.norm(X - P[:, hard], axis=0)
        worst = int(np.argmax(dists))
        P[:, k] = X[:, worst]
        hard[worst] = k
    return P, hard


def fit_prototypes(
    repo,
    style: str,
    K: int = DEFAULT_K,
    momentum: float = DEFAULT_MOMENTUM,
    epochs: int = DEFAULT_EPOCHS,
    seed: int = 0,
    epsilon: float = DEFAULT_EPSILON,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
) -> StyleIndex:
    """Cluster one style's compressed embeddings into K prototype groups.

    Prototypes start at K seeded-random distinct samples; each epoch solves
    the relaxed assignment, hardens it by per-sample argmax, then moves every
    prototype toward its members' mean under the momentum coefficient.
    """
    if not 0.0 <= momentum <= 1.0:
        raise ValueError("momentum must lie in [0, 1]")
    samples = repo.of_style(style)
    if len(samples) < K:
        raise TooFewSamples(
            f"style '{style}' has {len(samples)} samples, needs >= {K}"
        )
    ids = tuple(s.id for s in samples)
    X = np.stack([np.asarray(s.conditions.semantic, dtype=float) for s in samples]).T

    rng = np.random.default_rng(seed)
    init = rng.choice(len(samples), size=K, replace=False)
    P = X[:, init].copy()

    hard = np.zeros(X.shape[1], dtype=int)
    result = None
    for _ in range(max(1, epochs)):
        result = sinkhorn_assign(X, P, epsilon=epsilon, max_iter=max_iter, tol=tol)
        hard = _harden(result.plan)
        P, hard = _fix_empty_clusters(X, P, hard)
        means = np.stack(
            [X[:, hard == k].mean(axis=1) for k in range(K)]
        ).T
        P = momentum * P + (1.0 - momentum) * means

    members = tuple(
        tuple(ids[i] for i in np.flatnonzero(hard == k)) for k in range(K)
    )
    return StyleIndex(
        style=style,
        prototypes=P,
        members=members,
        assignment=result.plan,
        sample_ids=ids,
        converged=result.converged,
    )


def _ranked_prototypes(indexes, query: np.ndarray) -> list:
    """All (distance, style, prototype index) triples, sorted; ties break on
    (style, index)."""
    q = np.asarray(query, dtype=float)
    ranked = []
    for idx in indexes:
        dists = np.linalg.norm(idx.prototypes - q[:, None], axis=0)
        for k, d in enumerate(dists):
            ranked.append((float(d), idx.style, k))
    ranked.sort(key=lambda t: (t[0], t[1], t[2]))
    return ranked


def route(indexes, query_semantic: np.ndarray, m: int = DEFAULT_M) -> Activation:
    """Activate the union of member groups of the m nearest prototypes,
    pooled across every style."""
    indexes = list(indexes)
    total = sum(idx.prototypes.shape[1] for idx in indexes)
    if total == 0:
        raise EmptyIndex("no prototypes to route against")
    if not 1 <= m <= total:
        raise ValueError(f"m={m} outside [1, {total}]")

    ranked = _ranked_prototypes(indexes, query_semantic)[:m]
    by_style = {idx.style: idx for idx in indexes}
    activated = []
    seen = set()
    for dist, style, k in ranked:
        for sample_id in by_style[style].members[k]:
            if sample_id not in seen:
                seen.add(sample_id)
                activated.append(sample_id)
    return Activation(
        prototype_refs=tuple((style, k, dist) for dist, style, k in ranked),
        sample_ids=tuple(activated),
    )


def route_by_classification(indexes, query_semantic: np.ndarray) -> Activation:
    """Ablation strategy: the nearest prototype names a style and the whole
    style is activated."""
    indexes = list(indexes)
    if not indexes or all(idx.prototypes.shape[1] == 0 for idx in indexes):
        raise EmptyIndex("no prototypes to route against")
    dist, style, k = _ranked_prototypes(indexes, query_semantic)[0]
    winner = next(idx for idx in indexes if idx.style == style)
    return Activation(
        prototype_refs=((style, k, dist),),
        sample_ids=tuple(winner.sample_ids),
    )
