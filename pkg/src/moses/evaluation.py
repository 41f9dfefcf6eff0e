"""Metrics, paired significance testing, style summaries, and the ablation
harness (router modes, feature masks, compression dims, split policies)."""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import baselines
from .errors import LengthMismatch
from .pipeline import PipelineConfig, fit_pipeline
from .repository import Repository, ingest


def evaluate(predictions, labels) -> tuple[float, float, dict]:
    """Accuracy, F1 (positive class = human), and confusion counts."""
    predictions = np.asarray(predictions, dtype=int)
    labels = np.asarray(labels, dtype=int)
    if predictions.shape != labels.shape or predictions.ndim != 1:
        raise LengthMismatch("predictions and labels must be equal-length vectors")
    if predictions.size == 0:
        raise LengthMismatch("need at least one prediction")
    tp = int(np.sum((predictions == 1) & (labels == 1)))
    fp = int(np.sum((predictions == 1) & (labels == 0)))
    fn = int(np.sum((predictions == 0) & (labels == 1)))
    tn = int(np.sum((predictions == 0) & (labels == 0)))
    accuracy = (tp + tn) / predictions.size
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = (
        2 * precision * recall / (precision + recall)
        if precision + recall > 0
        else 0.0
    )
    return accuracy, f1, {"tp": tp, "fp": fp, "fn": fn, "tn": tn}


def chi2_sf_1df(x: float) -> float:
    """Survival function of the chi-square distribution with one degree of
    freedom, via the complementary error function."""
    if x <= 0:
        return 1.0
    return math.erfc(math.sqrt(x / 2.0))


def mcnemar(pred_a, pred_b, labels, correction: bool = False) -> tuple[float, float]:
    """Paired test on discordant predictions: b counts a-correct/b-wrong,
    c the converse. Returns (chi-square, p). No discordants gives (0, 1)."""
    pred_a = np.asarray(pred_a, dtype=int)
    pred_b = np.asarray(pred_b, dtype=int)
    labels = np.asarray(labels, dtype=int)
    if not (pred_a.shape == pred_b.shape == labels.shape):
        raise LengthMismatch("prediction and label vectors must align")
    a_right = pred_a == labels
    b_right = pred_b == labels
    b_count = int(np.sum(a_right & ~b_right))
    c_count = int(np.sum(~a_right & b_right))
    if b_count + c_count == 0:
        return 0.0, 1.0
    diff = abs(b_count - c_count)
    if correction:
        diff = max(diff - 1, 0)
    chi2 = diff**2 / (b_count + c_count)
    return float(chi2), chi2_sf_1df(float(chi2))


# ---------------------------------------------------------------------------
# Style summaries
# ---------------------------------------------------------------------------

def style_report(samples) -> list:
    """Score summary per (style, label) cell.

    `samples` is any iterable of objects carrying .style, .label, .score.
    Cells span every observed style crossed with both labels; empty cells
    are emitted with n/a statistics.
    """
    cells = {}
    styles = []
    for s in samples:
        if s.style not in cells:
            cells[s.style] = {0: [], 1: []}
            styles.append(s.style)
        cells[s.style][s.label].append(float(s.score))

    rows = []
    for style in sorted(styles):
        for label in (1, 0):
            values = np.asarray(cells[style][label], dtype=float)
            row = {"style": style, "label": label, "count": int(values.size)}
            if values.size == 0:
                row.update(
                    mean="n/a", std="n/a", q25="n/a", median="n/a", q75="n/a",
                    degenerate=True,
                )
            else:
                q25, median, q75 = np.percentile(values, [25, 50, 75])
                row.update(
                    mean=float(values.mean()),
                    std=float(values.std(ddof=1)) if values.size > 1 else 0.0,
                    q25=float(q25),
                    median=float(median),
                    q75=float(q75),
                    degenerate=bool(values.size < 2),
                )
            rows.append(row)
    return rows


def write_style_report_csv(rows, path) -> None:
    fields = ["style", "label", "count", "mean", "std", "q25", "median", "q75", "degenerate"]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)


# ---------------------------------------------------------------------------
# Evaluation harness
# ---------------------------------------------------------------------------

@dataclass
class EvalReport:
    name: str
    method: str
    n_reference: int
    n_test: int
    accuracy: float
    f1: float
    confusion: dict
    mcnemar_chi2: float | None = None
    mcnemar_p: float | None = None
    fit_seconds: float | None = None
    query_ms: float | None = None
    config: dict = field(default_factory=dict)

    def to_row(self) -> dict:
        row = {
            "name": self.name,
            "method": self.method,
            "n_reference": self.n_reference,
            "n_test": self.n_test,
            "accuracy": self.accuracy,
            "f1": self.f1,
            **self.confusion,
            "mcnemar_chi2": self.mcnemar_chi2,
            "mcnemar_p": self.mcnemar_p,
            "fit_seconds": self.fit_seconds,
            "query_ms": self.query_ms,
        }
        row["config"] = ";".join(f"{k}={v}" for k, v in sorted(self.config.items()))
        return row


def write_reports_csv(reports, path) -> None:
    if not reports:
        return
    fields = list(reports[0].to_row().keys())
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for report in reports:
            writer.writerow(report.to_row())


def _sample_to_record(s) -> dict:
    return {
        "id": s.id,
        "text": s.text,
        "label": s.label,
        "style": s.style,
        "embedding": np.asarray(s.embedding, dtype=float).tolist(),
        "token_logprobs": list(s.token_logprobs),
        "score": s.score,
    }


def subset_repository(repo: Repository, ids) -> Repository:
    """Re-ingest a subset of the repository (PCA refit on the subset)."""
    wanted = set(ids)
    records = [_sample_to_record(s) for s in repo.samples if s.id in wanted]
    return ingest(records, repo.compression.output_dim, case_fold=repo.case_fold)


def truncate_per_style(repo: Repository, n_per_style: int, seed: int) -> Repository:
    """Low-resource truncation: keep n_per_style samples per style,
    label-stratified, seeded."""
    rng = np.random.default_rng(seed)
    keep = []
    for style in repo.styles:
        for label in (0, 1):
            cell = [s.id for s in repo.samples if s.style == style and s.label == label]
            take = min(len(cell), n_per_style // 2)
            keep.extend(rng.choice(cell, size=take, replace=False).tolist())
    return subset_repository(repo, keep)


def _split_leave_style_out(repo: Repository, test_set, style: str):
    refs = [s.id for s in repo.samples if s.style != style]
    held = [q for q in test_set if q.get("style") == style]
    return subset_repository(repo, refs), held


def _resplit_random(repo: Repository, test_set, seed: int):
    """Pool reference and test rows, then redraw a split of the same sizes."""
    pool = [_sample_to_record(s) for s in repo.samples] + [dict(q) for q in test_set]
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(pool))
    n_ref = len(repo.samples)
    ref_records = [pool[i] for i in order[:n_ref]]
    test_records = [pool[i] for i in order[n_ref:]]
    return (
        ingest(ref_records, repo.compression.output_dim, case_fold=repo.case_fold),
        test_records,
    )


def _detect_all(model, queries, timed: bool = False, min_timings: int = 100):
    predictions = []
    times = []
    for q in queries:
        start = time.perf_counter() if timed else 0.0
        verdict = model.detect(
            q["text"], q["embedding"], q["token_logprobs"], q["score"]
        )
        if timed:
            times.append(time.perf_counter() - start)
        predictions.append(verdict.label)
    if timed:
        # median over at least min_timings warm repetitions
        i = 0
        while len(times) < min_timings and queries:
            q = queries[i % len(queries)]
            start = time.perf_counter()
            model.detect(q["text"], q["embedding"], q["token_logprobs"], q["score"])
            times.append(time.perf_counter() - start)
            i += 1
    query_ms = float(np.median(times) * 1000.0) if times else None
    return np.asarray(predictions), query_ms


def run_point(
    repo: Repository,
    test_set,
    config: PipelineConfig,
    method: str = "moses",
    name: str = "point",
    static_predictions=None,
    timed: bool = False,
) -> EvalReport:
    """Evaluate one harness grid point on a prepared reference/test split."""
    labels = np.asarray([q["label"] for q in test_set], dtype=int)
    scores = np.asarray([q["score"] for q in test_set], dtype=float)
    ref_scores = np.asarray([s.score for s in repo.samples], dtype=float)
    ref_labels = np.asarray([s.label for s in repo.samples], dtype=int)

    fit_seconds = None
    query_ms = None
    if method == "static":
        start = time.perf_counter()
        static = baselines.fit_static(ref_scores, ref_labels)
        if timed:
            fit_seconds = time.perf_counter() - start
        ts = [time.perf_counter()]
        predictions = static.predict(scores)
        if timed:
            query_ms = (time.perf_counter() - ts[0]) * 1000.0 / max(len(scores), 1)
    elif method == "nearest_vote":
        k = min(100, len(ref_scores))
        times = []
        predictions = []
        for s in scores:
            start = time.perf_counter()
            predictions.append(baselines.nearest_vote(ref_scores, ref_labels, s, k=k))
            times.append(time.perf_counter() - start)
        predictions = np.asarray(predictions)
        if timed:
            query_ms = float(np.median(times) * 1000.0)
    elif method == "moses":
        start = time.perf_counter()
        model = fit_pipeline(repo, config)
        if timed:
            fit_seconds = time.perf_counter() - start
        predictions, query_ms = _detect_all(model, test_set, timed=timed)
    else:
        raise ValueError(f"unknown method '{method}'")

    accuracy, f1, confusion = evaluate(predictions, labels)
    chi2 = p = None
    if static_predictions is not None and method != "static":
        chi2, p = mcnemar(predictions, static_predictions, labels)
    return EvalReport(
        name=name,
        method=method,
        n_reference=len(repo.samples),
        n_test=len(test_set),
        accuracy=accuracy,
        f1=f1,
        confusion=confusion,
        mcnemar_chi2=chi2,
        mcnemar_p=p,
        fit_seconds=fit_seconds,
        query_ms=query_ms,
        config=config.to_dict() if method == "moses" else {},
    )


def run_suite(
    repo: Repository,
    test_set,
    grid,
    base_config: PipelineConfig = PipelineConfig(),
    timed: bool = False,
) -> list:
    """One EvalReport per grid point.

    Grid points are dicts; recognized keys: method (moses | static |
    nearest_vote), split (fixed | random:<seed> | leave_style_out:<style> |
    low_resource:<n>), and any PipelineConfig field override. The static
    baseline is fitted on every split so moses points carry a McNemar
    comparison against it.
    """
    reports = []
    split_cache = {}
    for i, point in enumerate(grid):
        point = dict(point)
        method = point.pop("method", "moses")
        split = point.pop("split", "fixed")
        name = point.pop("name", f"point_{i}")

        if split not in split_cache:
            if split == "fixed":
                split_cache[split] = (repo, list(test_set))
            elif split.startswith("random:"):
                split_cache[split] = _resplit_random(repo, test_set, int(split.split(":")[1]))
            elif split.startswith("leave_style_out:"):
                split_cache[split] = _split_leave_style_out(
                    repo, test_set, split.split(":", 1)[1]
                )
            elif split.startswith("low_resource:"):
                n = int(split.split(":")[1])
                split_cache[split] = (
                    truncate_per_style(repo, n, seed=base_config.seed),
                    list(test_set),
                )
            else:
                raise ValueError(f"unknown split policy '{split}'")
        split_repo, split_test = split_cache[split]

        static_key = ("__static__", split)
        if static_key not in split_cache:
            static = baselines.fit_static(
                np.asarray([s.score for s in split_repo.samples]),
                np.asarray([s.label for s in split_repo.samples]),
            )
            split_cache[static_key] = static.predict(
                np.asarray([q["score"] for q in split_test])
            )

        config = PipelineConfig(**{**base_config.to_dict(), **point})
        reports.append(
            run_point(
                split_repo,
                split_test,
                config,
                method=method,
                name=name,
                static_predictions=split_cache[static_key],
                timed=timed,
            )
        )
    return reports
