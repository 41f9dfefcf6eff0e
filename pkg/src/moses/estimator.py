"""Conditional threshold estimators.

Both estimator kinds model P(human | conditions, score) = sigmoid(t(C) - score)
where t(C) is the estimated input-specific threshold: a linear form C.beta for
the logistic kind, a boosted tree ensemble for the nonlinear kind. The
discrimination score enters as a fixed margin offset, never as a fit target.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch
from .features import SCALAR_CONDITIONS

FEATURE_GROUPS = SCALAR_CONDITIONS + ("semantic",)
DEFAULT_L2 = 1e-4
SIGMOID_CLAMP = 30.0
_SEPARATION_NORM = 15.0


def sigmoid(z):
    z = np.clip(z, -SIGMOID_CLAMP, SIGMOID_CLAMP)
    return 1.0 / (1.0 + np.exp(-z))


def _weighted_nll(z, y, w):
    # log(1 + e^z) - y z, numerically stable
    return float(np.sum(w * (np.logaddexp(0.0, z) - y * z)))


# ---------------------------------------------------------------------------
# Feature matrix assembly
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FeatureMatrix:
    rows: np.ndarray          # n x q, intercept column of ones last
    labels: np.ndarray        # n, values in {0, 1}
    scores: np.ndarray        # n
    weights: np.ndarray       # n, balanced across classes
    feature_names: tuple      # q names, last is "intercept"


def balanced_weights(labels: np.ndarray) -> np.ndarray:
    """w_i = n / (2 n_class(i)), so both classes carry total weight n/2."""
    labels = np.asarray(labels)
    n = labels.shape[0]
    n_pos = int(labels.sum())
    n_neg = n - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("both classes must be present")
    w = np.where(labels == 1, n / (2.0 * n_pos), n / (2.0 * n_neg))
    return w


def feature_names_for(mask, semantic_dim: int) -> tuple:
    names = [name for name in SCALAR_CONDITIONS if name in mask]
    if "semantic" in mask:
        names.extend(f"sem_{j}" for j in range(semantic_dim))
    names.append("intercept")
    return tuple(names)


def condition_row(conditions, mask) -> np.ndarray:
    """One query's feature row (intercept appended) under the feature mask."""
    scalars = conditions.scalars()
    parts = [
        scalars[i]
        for i, name in enumerate(SCALAR_CONDITIONS)
        if name in mask
    ]
    if "semantic" in mask:
        parts.extend(np.asarray(conditions.semantic, dtype=float))
    parts.append(1.0)
    return np.array(parts, dtype=float)


def build_feature_matrix(samples, mask=FEATURE_GROUPS) -> FeatureMatrix:
    """Assemble the masked design matrix from repository samples."""
    unknown = set(mask) - set(FEATURE_GROUPS)
    if unknown:
        raise ValueError(f"unknown feature groups: {sorted(unknown)}")
    rows = np.stack([condition_row(s.conditions, mask) for s in samples])
    labels = np.array([s.label for s in samples], dtype=float)
    scores = np.array([s.score for s in samples], dtype=float)
    sem_dim = rows.shape[1] - 1 - sum(1 for n in SCALAR_CONDITIONS if n in mask)
    return FeatureMatrix(
        rows=rows,
        labels=labels,
        scores=scores,
        weights=balanced_weights(labels),
        feature_names=feature_names_for(mask, sem_dim),
    )


# ---------------------------------------------------------------------------
# Logistic estimator
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LogisticCte:
    beta: np.ndarray            # q, in standardized feature space
    converged: bool
    final_nll: float
    fisher: np.ndarray          # q x q, at the fitted beta, no ridge term
    feature_names: tuple
    standardize_mean: np.ndarray
    standardize_scale: np.ndarray
    n_train: int
    l2: float
    separation: bool = False
    fisher_singular: bool = False

    kind = "logistic"

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "beta": self.beta.tolist(),
            "converged": self.converged,
            "final_nll": self.final_nll,
            "fisher": self.fisher.tolist(),
            "feature_names": list(self.feature_names),
            "standardize_mean": self.standardize_mean.tolist(),
            "standardize_scale": self.standardize_scale.tolist(),
            "n_train": self.n_train,
            "l2": self.l2,
            "separation": self.separation,
            "fisher_singular": self.fisher_singular,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LogisticCte":
        return cls(
            beta=np.asarray(d["beta"], dtype=float),
            converged=bool(d["converged"]),
            final_nll=float(d["final_nll"]),
            fisher=np.asarray(d["fisher"], dtype=float),
            feature_names=tuple(d["feature_names"]),
            standardize_mean=np.asarray(d["standardize_mean"], dtype=float),
            standardize_scale=np.asarray(d["standardize_scale"], dtype=float),
            n_train=int(d["n_train"]),
            l2=float(d["l2"]),
            separation=bool(d["separation"]),
            fisher_singular=bool(d["fisher_singular"]),
        )

    def standardize(self, rows: np.ndarray) -> np.ndarray:
        return (rows - self.standardize_mean) / self.standardize_scale


def _standardization(rows: np.ndarray, feature_names) -> tuple[np.ndarray, np.ndarray]:
    """Mean/scale for the scalar condition columns; identity elsewhere.

    Keeps the Newton system well conditioned; semantic coordinates are
    already centered by the PCA and the intercept must stay untouched.
    """
    mean = np.zeros(rows.shape[1])
    scale = np.ones(rows.shape[1])
    for j, name in enumerate(feature_names):
        if name in SCALAR_CONDITIONS:
            mean[j] = rows[:, j].mean()
            sd = rows[:, j].std()
            scale[j] = sd if sd > 0 else 1.0
    return mean, scale


def fit_logistic(
    data: FeatureMatrix,
    l2: float = DEFAULT_L2,
    max_iter: int = 100,
    tol: float = 1e-8,
) -> LogisticCte:
    """Damped-Newton fit of the weighted logistic threshold model.

    Minimizes sum_i w_i * NLL(sigmoid(x_i.beta - tau_i), y_i) plus an l2
    ridge on the non-intercept coefficients. Falls back to a backtracking
    gradient step whenever the Newton system cannot be solved or fails to
    make progress.
    """
    if not np.all(np.isfinite(data.rows)):
        raise ValueError("feature rows must be finite")
    mean, scale = _standardization(data.rows, data.feature_names)
    X = (data.rows - mean) / scale
    y = data.labels
    w = data.weights
    tau = data.scores
    n, q = X.shape
    ridge_mask = np.array(
        [1.0 if name != "intercept" else 0.0 for name in data.feature_names]
    )

    def loss(beta):
        z = X @ beta - tau
        return _weighted_nll(z, y, w) + 0.5 * l2 * float(
            np.sum(ridge_mask * beta**2)
        )

    beta = np.zeros(q)
    current = loss(beta)
    converged = False
    for _ in range(max_iter):
        z = X @ beta - tau
        mu = sigmoid(z)
        grad = X.T @ (w * (mu - y)) + l2 * ridge_mask * beta
        gnorm = float(np.linalg.norm(grad))
        if gnorm < tol:
            converged = True
            break
        curvature = w * mu * (1.0 - mu)
        hess = X.T @ (curvature[:, None] * X) + l2 * np.diag(ridge_mask)
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            step = grad
        # Armijo backtracking on the Newton direction, then on the gradient
        improved = False
        for direction in (step, grad):
            slope = float(grad @ direction)
            if slope <= 0:
                continue
            t = 1.0
            while t > 2.0**-40:
                candidate = beta - t * direction
                value = loss(candidate)
                if value <= current - 1e-4 * t * slope:
                    beta, current = candidate, value
                    improved = True
                    break
                t *= 0.5
            if improved:
                break
        if not improved:
            break

    z = X @ beta - tau
    mu = sigmoid(z)
    grad = X.T @ (w * (mu - y)) + l2 * ridge_mask * beta
    converged = converged or float(np.linalg.norm(grad)) < tol
    curvature = w * mu * (1.0 - mu)
    fisher = X.T @ (curvature[:, None] * X)
    eigvals = np.linalg.eigvalsh(fisher)
    singular = bool(eigvals[0] <= 1e-12 * max(float(eigvals[-1]), 1.0))

    return LogisticCte(
        beta=beta,
        converged=converged,
        final_nll=_weighted_nll(z, y, w),
        fisher=fisher,
        feature_names=data.feature_names,
        standardize_mean=mean,
        standardize_scale=scale,
        n_train=n,
        l2=l2,
        separation=bool(np.linalg.norm(beta) > _SEPARATION_NORM),
        fisher_singular=singular,
    )


# ---------------------------------------------------------------------------
# Boosted-tree estimator
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoostedCte:
    trees: tuple                # nested split/leaf dicts; leaf values include eta
    base_margin: float
    depth_limit: int
    n_trees: int
    eta: float
    reg_lambda: float
    reg_gamma: float
    feature_names: tuple        # without intercept
    score_as_feature: bool
    min_child_weight: float = 1.0
    round_nll: tuple = ()       # weighted training NLL after each round
    round_objective: tuple = () # NLL + accumulated tree regularization

    kind = "boosted"

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "trees": list(self.trees),
            "base_margin": self.base_margin,
            "depth_limit": self.depth_limit,
            "n_trees": self.n_trees,
            "eta": self.eta,
            "reg_lambda": self.reg_lambda,
            "reg_gamma": self.reg_gamma,
            "feature_names": list(self.feature_names),
            "score_as_feature": self.score_as_feature,
            "min_child_weight": self.min_child_weight,
            "round_nll": list(self.round_nll),
            "round_objective": list(self.round_objective),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BoostedCte":
        return cls(
            trees=tuple(d["trees"]),
            base_margin=float(d["base_margin"]),
            depth_limit=int(d["depth_limit"]),
            n_trees=int(d["n_trees"]),
            eta=float(d["eta"]),
            reg_lambda=float(d["reg_lambda"]),
            reg_gamma=float(d["reg_gamma"]),
            feature_names=tuple(d["feature_names"]),
            score_as_feature=bool(d["score_as_feature"]),
            min_child_weight=float(d.get("min_child_weight", 1.0)),
            round_nll=tuple(d["round_nll"]),
            round_objective=tuple(d["round_objective"]),
        )


class _Binned:
    """Fixed-width histogram view of a feature matrix for split search.

    With at most `max_bins` distinct values per feature the binning is exact
    and split thresholds are midpoints between adjacent distinct values.
    """

    def __init__(self, F: np.ndarray, max_bins: int = 64):
        n, p = F.shape
        self.n_features = p
        self.max_bins = max_bins
        self.codes = np.empty((n, p), dtype=np.int64)
        self.thresholds = []  # per feature: threshold after bin b, length bins-1
        for j in range(p):
            vals = F[:, j]
            uniq = np.unique(vals)
            if uniq.size > max_bins:
                qs = np.quantile(vals, np.linspace(0, 1, max_bins + 1)[1:-1])
                edges = np.unique(qs)
            else:
                edges = (uniq[:-1] + uniq[1:]) / 2.0
            self.codes[:, j] = np.searchsorted(edges, vals, side="right")
            self.thresholds.append(edges)
        self.offsets = np.arange(p, dtype=np.int64) * max_bins
        self.flat = (self.codes + self.offsets).ravel()
        self.width = p * max_bins


def _histograms(binned: _Binned, idx: np.ndarray, g: np.ndarray, h: np.ndarray):
    p, B = binned.n_features, binned.max_bins
    flat = (binned.codes[idx] + binned.offsets).ravel()
    rep_g = np.repeat(g[idx], p)
    rep_h = np.repeat(h[idx], p)
    gb = np.bincount(flat, weights=rep_g, minlength=binned.width).reshape(p, B)
    hb = np.bincount(flat, weights=rep_h, minlength=binned.width).reshape(p, B)
    cb = np.bincount(flat, minlength=binned.width).reshape(p, B)
    return gb, hb, cb


def _best_split(binned, idx, g, h, reg_lambda, reg_gamma, min_child_weight):
    """Best (feature, bin boundary, gain) by the second-order split criterion.

    Splits leaving a child with hessian mass below min_child_weight are
    rejected, which throttles tree growth as predictions saturate.
    """
    gb, hb, cb = _histograms(binned, idx, g, h)
    G = gb.sum(axis=1, keepdims=True)
    H = hb.sum(axis=1, keepdims=True)
    C = cb.sum(axis=1, keepdims=True)
    GL = np.cumsum(gb, axis=1)[:, :-1]
    HL = np.cumsum(hb, axis=1)[:, :-1]
    CL = np.cumsum(cb, axis=1)[:, :-1]
    GR = G - GL
    HR = H - HL
    CR = C - CL
    parent = G**2 / (H + reg_lambda)
    gain = 0.5 * (
        GL**2 / (HL + reg_lambda) + GR**2 / (HR + reg_lambda) - parent
    ) - reg_gamma
    bad = (CL == 0) | (CR == 0) | (HL < min_child_weight) | (HR < min_child_weight)
    gain[bad] = -np.inf
    j, b = np.unravel_index(int(np.argmax(gain)), gain.shape)
    best = float(gain[j, b])
    if not np.isfinite(best) or best <= 0.0 or b >= len(binned.thresholds[j]):
        return None
    return int(j), float(binned.thresholds[j][b]), best


def _grow_tree(binned, F, idx, g, h, depth_limit, reg_lambda, reg_gamma, eta,
               min_child_weight):
    """One regression tree as nested dicts; returns (node, leaf_values)."""
    leaf_weights = []

    def build(rows, depth):
        G = float(g[rows].sum())
        H = float(h[rows].sum())
        if depth < depth_limit and rows.size >= 2:
            found = _best_split(binned, rows, g, h, reg_lambda, reg_gamma,
                                min_child_weight)
            if found is not None:
                j, threshold, _ = found
                mask = F[rows, j] < threshold
                left = build(rows[mask], depth + 1)
                right = build(rows[~mask], depth + 1)
                return {
                    "feature": j,
                    "threshold": threshold,
                    "left": left,
                    "right": right,
                }
        value = eta * (-G / (H + reg_lambda))
        leaf_weights.append(value)
        return {"leaf": value}

    root = build(idx, 0)
    return root, leaf_weights


def _tree_predict(node: dict, row: np.ndarray) -> float:
    while "leaf" not in node:
        node = node["left"] if row[node["feature"]] < node["threshold"] else node["right"]
    return node["leaf"]


def _tree_predict_all(node: dict, F: np.ndarray) -> np.ndarray:
    out = np.empty(F.shape[0])
    stack = [(node, np.arange(F.shape[0]))]
    while stack:
        nd, rows = stack.pop()
        if "leaf" in nd:
            out[rows] = nd["leaf"]
            continue
        mask = F[rows, nd["feature"]] < nd["threshold"]
        stack.append((nd["left"], rows[mask]))
        stack.append((nd["right"], rows[~mask]))
    return out


def _tree_stats(node: dict) -> tuple[int, float]:
    """(leaf count, sum of squared leaf values)."""
    if "leaf" in node:
        return 1, node["leaf"] ** 2
    lt, lw = _tree_stats(node["left"])
    rt, rw = _tree_stats(node["right"])
    return lt + rt, lw + rw


def _fit_base_margin(offsets: np.ndarray, y: np.ndarray, w: np.ndarray) -> float:
    """Optimal constant margin under the weighted logistic loss."""
    c = 0.0
    for _ in range(100):
        mu = sigmoid(c + offsets)
        grad = float(np.sum(w * (mu - y)))
        hess = float(np.sum(w * mu * (1.0 - mu)))
        if hess <= 0 or abs(grad) < 1e-12:
            break
        c -= grad / hess
    return c


def _validation_split(labels: np.ndarray, fraction: float, seed: int):
    """Deterministic label-stratified holdout; both parts keep both classes."""
    rng = np.random.default_rng(seed)
    train = np.ones(labels.shape[0], dtype=bool)
    for cls in (0, 1):
        members = np.flatnonzero(labels == cls)
        n_val = int(round(members.size * fraction))
        n_val = min(max(n_val, 1), members.size - 1)
        held = rng.choice(members, size=n_val, replace=False)
        train[held] = False
    return train


def fit_boosted(
    data: FeatureMatrix,
    depth: int = 6,
    n_trees: int = 100,
    eta: float = 0.1,
    reg_lambda: float = 1.0,
    reg_gamma: float = 0.0,
    score_as_feature: bool = False,
    min_child_weight: float = 1.0,
    early_stopping_fraction: float = 0.0,
    early_stopping_patience: int = 10,
    seed: int = 0,
    max_bins: int = 64,
) -> BoostedCte:
    """Additively train the tree-ensemble threshold estimator.

    Trees split on raw condition coordinates; the discrimination score acts
    as a fixed negative margin offset (or, with score_as_feature, as an
    extra splittable column). Boosting stops once no split clears the gain
    requirement. With early_stopping_fraction > 0 a stratified holdout of
    that size picks the round count: the kept ensemble is the prefix whose
    holdout loss was lowest.
    """
    F = data.rows[:, :-1]  # drop the intercept column
    names = data.feature_names[:-1]
    y = data.labels
    w = data.weights
    if score_as_feature:
        F = np.column_stack([F, data.scores])
        names = names + ("score",)
        offsets = np.zeros(len(y))
    else:
        offsets = -data.scores

    if early_stopping_fraction > 0.0:
        train_mask = _validation_split(y, early_stopping_fraction, seed)
    else:
        train_mask = np.ones(y.shape[0], dtype=bool)
    val_mask = ~train_mask
    Ft, yt, wt, offt = F[train_mask], y[train_mask], w[train_mask], offsets[train_mask]

    binned = _Binned(Ft, max_bins=max_bins)
    base = _fit_base_margin(offt, yt, wt)
    margins = base + offt
    val_margins = base + offsets[val_mask]

    trees = []
    round_nll = []
    round_objective = []
    omega_total = 0.0
    best_val = np.inf
    best_round = 0
    train_rows = np.arange(Ft.shape[0])
    for t in range(1, n_trees + 1):
        mu = sigmoid(margins)
        g = wt * (mu - yt)
        h = wt * mu * (1.0 - mu)
        if _best_split(
            binned, train_rows, g, h, reg_lambda, reg_gamma, min_child_weight
        ) is None:
            break
        root, _ = _grow_tree(
            binned, Ft, train_rows, g, h, depth, reg_lambda, reg_gamma, eta,
            min_child_weight,
        )
        margins = margins + _tree_predict_all(root, Ft)
        trees.append(root)
        leaves, sumsq = _tree_stats(root)
        omega_total += reg_gamma * leaves + 0.5 * reg_lambda * sumsq
        nll = _weighted_nll(margins, yt, wt)
        round_nll.append(nll)
        round_objective.append(nll + omega_total)
        if val_mask.any():
            val_margins = val_margins + _tree_predict_all(root, F[val_mask])
            val_nll = _weighted_nll(val_margins, y[val_mask], w[val_mask])
            if val_nll < best_val - 1e-12:
                best_val = val_nll
                best_round = t
            elif t - best_round >= early_stopping_patience:
                break

    if val_mask.any() and best_round > 0:
        trees = trees[:best_round]
        round_nll = round_nll[:best_round]
        round_objective = round_objective[:best_round]

    return BoostedCte(
        trees=tuple(trees),
        base_margin=base,
        depth_limit=depth,
        n_trees=n_trees,
        eta=eta,
        reg_lambda=reg_lambda,
        reg_gamma=reg_gamma,
        feature_names=names,
        score_as_feature=score_as_feature,
        min_child_weight=min_child_weight,
        round_nll=tuple(round_nll),
        round_objective=tuple(round_objective),
    )


# ---------------------------------------------------------------------------
# Shared prediction surface
# ---------------------------------------------------------------------------

def predict(model, c: np.ndarray, tau: float) -> tuple[float, float]:
    """(probability of human, estimated threshold) for one query.

    For the logistic kind `c` is the intercept-terminated feature row; for
    the boosted kind it is the raw condition coordinates in training order.
    """
    c = np.asarray(c, dtype=float)
    if model.kind == "logistic":
        if c.shape[0] != model.beta.shape[0]:
            raise DimensionMismatch(
                f"expected feature row of length {model.beta.shape[0]}, got {c.shape[0]}"
            )
        threshold = float(model.standardize(c) @ model.beta)
    else:
        expected = len(model.feature_names) - (1 if model.score_as_feature else 0)
        if c.shape[0] != expected:
            raise DimensionMismatch(
                f"expected condition row of length {expected}, got {c.shape[0]}"
            )
        row = np.append(c, tau) if model.score_as_feature else c
        margin = model.base_margin + sum(
            _tree_predict(t, row) for t in model.trees
        )
        threshold = float(margin + tau) if model.score_as_feature else float(margin)
    p = float(sigmoid(np.array(threshold - tau)))
    return p, threshold


def threshold_variance(model: LogisticCte, c: np.ndarray, n: int) -> float:
    """Estimated variance of the threshold estimate at this query:
    c' F^-1 c / n with F the empirical weighted Fisher information."""
    c = np.asarray(c, dtype=float)
    if c.shape[0] != model.beta.shape[0]:
        raise DimensionMismatch(
            f"expected feature row of length {model.beta.shape[0]}, got {c.shape[0]}"
        )
    x = model.standardize(c)
    if model.fisher_singular:
        solved = np.linalg.pinv(model.fisher) @ x
    else:
        try:
            solved = np.linalg.solve(model.fisher, x)
        except np.linalg.LinAlgError:
            solved = np.linalg.pinv(model.fisher) @ x
    return max(float(x @ solved) / n, 0.0)


def attribute(model: LogisticCte, c: np.ndarray, tau: float) -> np.ndarray:
    """Partial derivatives of the human probability w.r.t. each raw condition
    coordinate (intercept excluded)."""
    c = np.asarray(c, dtype=float)
    z = float(model.standardize(c) @ model.beta) - tau
    s = float(sigmoid(np.array(z)))
    sens = s * (1.0 - s)
    out = sens * model.beta / model.standardize_scale
    return out[:-1]
