"""Command-line interface: ingest, fit, detect, eval, ablate, synth, report.

Exit codes: 0 success, 1 usage error, 2 data/validation error. All
randomness sits behind --seed (env fallback MOSES_SEED).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

import numpy as np

from . import baselines, evaluation, figures, repository, synth
from .errors import MosesError
from .estimator import FEATURE_GROUPS
from .pipeline import (
    CTE_KINDS,
    ROUTER_MODES,
    PipelineConfig,
    fit_pipeline,
    load_pipeline,
)
from .pipeline import snapshot as snapshot_pipeline

USAGE_ERROR = 1
DATA_ERROR = 2


def _default_seed() -> int:
    return int(os.environ.get("MOSES_SEED", "0"))


def _load_config_file(path) -> dict:
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def _config_from_args(args) -> PipelineConfig:
    """Precedence: flags > config file > defaults."""
    values = {}
    if getattr(args, "config", None):
        file_values = _load_config_file(args.config)
        unknown = set(file_values) - set(PipelineConfig().to_dict())
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        values.update(file_values)
    flag_map = {
        "k": "k",
        "m": "m",
        "momentum": "momentum",
        "epochs": "epochs",
        "cte": "cte_kind",
        "router": "router_mode",
        "r": "r",
        "seed": "seed",
        "epsilon": "epsilon",
        "l2": "l2",
        "tree_depth": "tree_depth",
        "n_trees": "n_trees",
        "eta": "eta",
    }
    for flag, key in flag_map.items():
        value = getattr(args, flag, None)
        if value is not None:
            values[key] = value
    if getattr(args, "features", None):
        values["feature_mask"] = tuple(args.features.split(","))
    if isinstance(values.get("feature_mask"), list):
        values["feature_mask"] = tuple(values["feature_mask"])
    values.setdefault("seed", _default_seed())
    return PipelineConfig(**values)


def _write_jsonl(path, rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True))
            fh.write("\n")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def _cmd_ingest(args) -> int:
    records = repository.read_jsonl(args.input)
    repo = repository.ingest(records, args.r, case_fold=not args.no_case_fold)
    repository.snapshot(repo, args.out)
    print(f"ingested {len(repo)} samples, {len(repo.styles)} styles -> {args.out}")
    return 0


def _cmd_fit(args) -> int:
    repo = repository.load(args.repo)
    config = _config_from_args(args)
    model = fit_pipeline(repo, config)
    snapshot_pipeline(model, args.out)
    print(f"fitted pipeline ({config.cte_kind}, {config.router_mode}) -> {args.out}")
    return 0


def _query_fields(rec, line_no):
    for name in ("text", "embedding", "token_logprobs", "score"):
        if name not in rec:
            raise MosesError(f"line {line_no}: query missing field '{name}'")
    return rec


def _cmd_detect(args) -> int:
    model = load_pipeline(args.model)
    rows = []
    with open(args.input, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = _query_fields(json.loads(line), line_no)
                verdict = model.detect(
                    rec["text"], rec["embedding"], rec["token_logprobs"], rec["score"]
                )
                rows.append({"id": rec.get("id", f"line-{line_no}"), **verdict.to_dict()})
            except (json.JSONDecodeError, MosesError, ValueError) as exc:
                rows.append({"id": f"line-{line_no}", "error": str(exc)})
    _write_jsonl(args.out, rows)
    print(f"wrote {len(rows)} verdicts -> {args.out}")
    return 0


def _cmd_eval(args) -> int:
    model = load_pipeline(args.model)
    test = repository.read_jsonl(args.input)
    labels = []
    predictions = []
    for line_no, rec in enumerate(test, start=1):
        rec = _query_fields(rec, line_no)
        if "label" not in rec:
            raise MosesError(f"line {line_no}: eval input missing 'label'")
        labels.append(int(rec["label"]))
        verdict = model.detect(
            rec["text"], rec["embedding"], rec["token_logprobs"], rec["score"]
        )
        predictions.append(verdict.label)
    accuracy, f1, confusion = evaluation.evaluate(predictions, labels)

    ref_scores = np.asarray([s.score for s in model.repository.samples])
    ref_labels = np.asarray([s.label for s in model.repository.samples])
    static = baselines.fit_static(ref_scores, ref_labels)
    static_pred = static.predict(np.asarray([q["score"] for q in test]))
    chi2, p = evaluation.mcnemar(predictions, static_pred, labels)

    result = {
        "n_test": len(labels),
        "accuracy": accuracy,
        "f1": f1,
        **confusion,
        "static_accuracy": float((static_pred == np.asarray(labels)).mean()),
        "mcnemar_chi2_vs_static": chi2,
        "mcnemar_p_vs_static": p,
        "config": model.config.to_dict(),
    }
    if args.json:
        print(json.dumps(result, sort_keys=True, indent=2))
    else:
        for key in ("n_test", "accuracy", "f1", "static_accuracy",
                    "mcnemar_chi2_vs_static", "mcnemar_p_vs_static"):
            print(f"{key:28s} {result[key]}")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(result, fh, sort_keys=True, indent=2)
    return 0


def _grid_from_spec(spec: str) -> list:
    """Comma-separated grid axes like 'router_mode=m_nearest|disabled'."""
    axes = []
    for part in spec.split(";"):
        key, _, values = part.partition("=")
        axes.append((key.strip(), values.split("|")))
    points = [{}]
    for key, values in axes:
        points = [{**p, key: _coerce(v)} for p in points for v in values]
    return points


def _coerce(value: str):
    for cast in (int, float):
        try:
            return cast(value)
        except ValueError:
            continue
    if "," in value:
        return tuple(value.split(","))
    return value


def _cmd_ablate(args) -> int:
    repo = repository.load(args.repo)
    test = repository.read_jsonl(args.input)
    base = _config_from_args(args)
    if args.grid:
        grid = _grid_from_spec(args.grid)
    else:
        grid = [
            {"name": "default"},
            {"name": "classification", "router_mode": "classification"},
            {"name": "no_sar", "router_mode": "disabled"},
            {"name": "static", "method": "static"},
            {"name": "nearest_vote", "method": "nearest_vote"},
        ]
        grid += [
            {"name": f"wo_{group}",
             "feature_mask": tuple(g for g in FEATURE_GROUPS if g != group)}
            for group in FEATURE_GROUPS
        ]
    for i, point in enumerate(grid):
        point.setdefault("name", f"point_{i}")
    reports = evaluation.run_suite(repo, test, grid, base_config=base, timed=args.timed)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "ablation.csv"
    evaluation.write_reports_csv(reports, csv_path)
    figures.accuracy_bars_figure(reports, out_dir / "ablation_accuracy.png")
    if args.json:
        print(json.dumps([r.to_row() for r in reports], sort_keys=True, indent=2))
    else:
        for r in reports:
            print(f"{r.name:24s} {r.method:12s} acc={r.accuracy:.4f} f1={r.f1:.4f}")
    print(f"wrote {csv_path} and figures")
    return 0


def _cmd_synth(args) -> int:
    repo, test = synth.synth_benchmark(args.seed, args.n_per_cell)
    repository.snapshot(repo, args.out_repo)
    _write_jsonl(args.out_test, test)
    print(
        f"synthetic benchmark: {len(repo)} reference, {len(test)} test "
        f"-> {args.out_repo}, {args.out_test}"
    )
    return 0


def _cmd_report(args) -> int:
    repo = repository.load(args.repo)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = evaluation.style_report(repo.samples)
    csv_path = out_dir / "style_report.csv"
    evaluation.write_style_report_csv(rows, csv_path)
    figures.score_distribution_figure(repo.samples, out_dir / "score_distributions.png")
    figures.condition_score_figure(repo.samples, out_dir / "condition_scores.png")
    if args.json:
        print(json.dumps(rows, sort_keys=True, indent=2))
    else:
        for row in rows:
            mean = row["mean"] if row["mean"] == "n/a" else f"{row['mean']:.4f}"
            std = row["std"] if row["std"] == "n/a" else f"{row['std']:.4f}"
            print(
                f"{row['style']:16s} label={row['label']} n={row['count']:5d} "
                f"mean={mean} std={std}"
            )
    print(f"wrote {csv_path} and figures -> {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _add_config_flags(p) -> None:
    p.add_argument("--config", help="optional TOML config file (flags win)")
    p.add_argument("--k", type=int, help="prototypes per style")
    p.add_argument("--m", type=int, help="activated prototypes per query")
    p.add_argument("--momentum", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--cte", choices=CTE_KINDS, help="threshold estimator kind")
    p.add_argument("--router", choices=ROUTER_MODES)
    p.add_argument("--features", help="comma-separated feature groups to keep")
    p.add_argument("--r", type=int, help="compressed semantic dimension")
    p.add_argument("--epsilon", type=float, help="transport regularization")
    p.add_argument("--l2", type=float)
    p.add_argument("--tree-depth", dest="tree_depth", type=int)
    p.add_argument("--n-trees", dest="n_trees", type=int)
    p.add_argument("--eta", type=float)
    p.add_argument("--seed", type=int, help="defaults to MOSES_SEED or 0")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="moses", description="Stylistics-conditional AI-text detection"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate raw JSONL into a repository snapshot")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--r", type=int, default=32)
    p.add_argument("--no-case-fold", action="store_true")
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("fit", help="fit the detection pipeline")
    p.add_argument("--repo", required=True)
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("detect", help="verdicts for a query JSONL stream")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_detect)

    p = sub.add_parser("eval", help="accuracy/F1 of a fitted model on labeled queries")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("ablate", help="run the evaluation harness grid")
    p.add_argument("--repo", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--grid", help="e.g. 'cte_kind=logistic|boosted;r=8|16'")
    p.add_argument("--timed", action="store_true")
    p.add_argument("--json", action="store_true")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("synth", help="generate the synthetic two-style benchmark")
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--n-per-cell", dest="n_per_cell", type=int, default=100)
    p.add_argument("--out-repo", dest="out_repo", required=True)
    p.add_argument("--out-test", dest="out_test", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("report", help="style score summary as CSV plus figures")
    p.add_argument("--repo", required=True)
    p.add_argument("--out-dir", dest="out_dir", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return USAGE_ERROR if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except MosesError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_ERROR


if __name__ == "__main__":
    sys.exit(main())
