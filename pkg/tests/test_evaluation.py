"""Metrics against hand counts, McNemar against quadrature, style report
fixtures, and harness split policies."""

import numpy as np
import pytest

from moses.errors import LengthMismatch
from moses.evaluation import (
    chi2_sf_1df,
    evaluate,
    mcnemar,
    run_suite,
    style_report,
    subset_repository,
    truncate_per_style,
)
from moses.pipeline import PipelineConfig
from moses.synth import synth_benchmark

from oracles import chi2_sf_1df_quadrature


class TestEvaluate:
    def test_perfect(self):
        acc, f1, confusion = evaluate([1, 0, 1], [1, 0, 1])
        assert acc == 1.0 and f1 == 1.0
        assert confusion == {"tp": 2, "fp": 0, "fn": 0, "tn": 1}

    def test_all_ai_on_balanced(self):
        acc, f1, _ = evaluate([0, 0, 0, 0], [1, 0, 1, 0])
        assert acc == 0.5 and f1 == 0.0

    def test_hand_arithmetic(self):
        labels = [1] * 10 + [0] * 10
        preds = [1] * 9 + [0] + [1] + [0] * 9
        acc, f1, confusion = evaluate(preds, labels)
        assert confusion == {"tp": 9, "fp": 1, "fn": 1, "tn": 9}
        assert acc == 0.9 and abs(f1 - 0.9) < 1e-12

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            evaluate([1, 0], [1])

    def test_brute_force_recount(self):
        rng = np.random.default_rng(0)
        preds = rng.integers(0, 2, 57)
        labels = rng.integers(0, 2, 57)
        _, _, confusion = evaluate(preds, labels)
        brute = {"tp": 0, "fp": 0, "fn": 0, "tn": 0}
        for p, l in zip(preds, labels):
            key = ("t" if p == l else "f") + ("p" if p == 1 else "n")
            brute[key] += 1
        assert confusion == brute


class TestMcnemar:
    def test_paper_headline_value(self):
        # 49 discordants all favoring method a
        labels = np.zeros(100, dtype=int)
        pred_a = np.zeros(100, dtype=int)
        pred_b = np.concatenate([np.ones(49, dtype=int), np.zeros(51, dtype=int)])
        chi2, p = mcnemar(pred_a, pred_b, labels)
        assert chi2 == 49.0
        assert abs(p - 2.56e-12) < 0.02e-12

    def test_symmetric_discordants(self):
        labels = np.array([1, 1, 0, 0])
        pred_a = np.array([1, 0, 0, 1])
        pred_b = np.array([0, 1, 0, 1])
        chi2, p = mcnemar(pred_a, pred_b, labels)
        assert chi2 == 0.0 and p == 1.0

    def test_no_discordants(self):
        labels = np.array([1, 0, 1])
        same = np.array([1, 1, 0])
        assert mcnemar(same, same, labels) == (0.0, 1.0)

    def test_b10_c0_quadrature(self):
        labels = np.zeros(30, dtype=int)
        pred_a = np.zeros(30, dtype=int)
        pred_b = np.concatenate([np.ones(10, dtype=int), np.zeros(20, dtype=int)])
        chi2, p = mcnemar(pred_a, pred_b, labels)
        assert chi2 == 10.0
        assert abs(p - 0.001565) < 2e-6
        assert abs(p - chi2_sf_1df_quadrature(10.0)) < 1e-9

    def test_sf_matches_quadrature_grid(self):
        for x in (0.5, 1.0, 3.84, 10.0, 25.0):
            assert abs(chi2_sf_1df(x) - chi2_sf_1df_quadrature(x)) < 1e-9

    def test_hand_fixture_counts(self):
        labels = np.array([1, 1, 1, 0, 0, 0])
        pred_a = np.array([1, 1, 0, 0, 1, 0])  # correct: 0,1,3,5
        pred_b = np.array([1, 0, 1, 1, 1, 0])  # correct: 0,2,5
        # a-correct & b-wrong: idx 1, 3 -> b=2; converse: idx 2 -> c=1
        chi2, _ = mcnemar(pred_a, pred_b, labels)
        assert chi2 == (2 - 1) ** 2 / 3

    def test_continuity_correction_variant(self):
        labels = np.zeros(20, dtype=int)
        pred_a = np.zeros(20, dtype=int)
        pred_b = np.concatenate([np.ones(6, dtype=int), np.zeros(14, dtype=int)])
        chi2_plain, _ = mcnemar(pred_a, pred_b, labels)
        chi2_corr, _ = mcnemar(pred_a, pred_b, labels, correction=True)
        assert chi2_plain == 6.0
        assert chi2_corr == 25.0 / 6.0


class FakeSample:
    def __init__(self, style, label, score):
        self.style = style
        self.label = label
        self.score = score


class TestStyleReport:
    def test_figure_headline_cell(self):
        samples = [FakeSample("news", 1, v) for v in (-0.9, -0.2, 0.5)]
        samples.append(FakeSample("news", 0, 1.0))
        rows = style_report(samples)
        human = next(r for r in rows if r["label"] == 1)
        assert abs(human["mean"] - (-0.2)) < 1e-12
        assert abs(human["std"] - 0.7) < 1e-12

    def test_single_value_cell_degenerate(self):
        rows = style_report([FakeSample("s", 1, 0.3), FakeSample("s", 0, 0.1)])
        for row in rows:
            assert row["std"] == 0.0
            assert row["degenerate"]

    def test_empty_cell_marked(self):
        rows = style_report([FakeSample("s", 1, 0.5)])
        missing = next(r for r in rows if r["label"] == 0)
        assert missing["mean"] == "n/a"
        assert missing["count"] == 0


@pytest.fixture(scope="module")
def bench():
    return synth_benchmark(5, 30)


class TestHarness:

    def test_single_point_grid(self, bench):
        repo, test = bench
        config = PipelineConfig(r=8, k=2, m=2, seed=5)
        reports = run_suite(repo, test, [{"name": "only"}], base_config=config)
        assert len(reports) == 1
        assert reports[0].name == "only"
        assert 0.0 <= reports[0].accuracy <= 1.0
        assert reports[0].mcnemar_chi2 is not None

    def test_leave_style_out_split(self, bench):
        repo, test = bench
        config = PipelineConfig(r=8, k=2, m=2, seed=5)
        reports = run_suite(
            repo,
            test,
            [{"name": "ood", "split": "leave_style_out:news"}],
            base_config=config,
        )
        assert reports[0].n_test == sum(q["style"] == "news" for q in test)
        assert reports[0].n_reference == sum(
            s.style != "news" for s in repo.samples
        )

    def test_low_resource_split(self, bench):
        repo, test = bench
        config = PipelineConfig(r=8, k=2, m=2, seed=5)
        reports = run_suite(
            repo,
            test,
            [{"name": "small", "split": "low_resource:40"}],
            base_config=config,
        )
        assert reports[0].n_reference == 80  # 40 per style, 2 styles

    def test_reproducible_with_same_seed(self, bench):
        repo, test = bench
        config = PipelineConfig(r=8, k=2, m=2, seed=5)
        grid = [{"name": "a"}, {"name": "b", "cte_kind": "boosted"}]
        r1 = run_suite(repo, test, grid, base_config=config)
        r2 = run_suite(repo, test, grid, base_config=config)
        for a, b in zip(r1, r2):
            assert a.accuracy == b.accuracy
            assert a.confusion == b.confusion

    def test_baseline_methods(self, bench):
        repo, test = bench
        config = PipelineConfig(r=8, seed=5)
        reports = run_suite(
            repo,
            test,
            [
                {"name": "static", "method": "static"},
                {"name": "vote", "method": "nearest_vote"},
            ],
            base_config=config,
        )
        assert all(0.3 < r.accuracy <= 1.0 for r in reports)

    def test_truncate_per_style_stratified(self, bench):
        repo, _ = bench
        small = truncate_per_style(repo, 20, seed=0)
        for style in small.styles:
            cell = [s for s in small.samples if s.style == style]
            assert len(cell) == 20
            assert sum(s.label for s in cell) == 10

    def test_subset_repository_refits(self, bench):
        repo, _ = bench
        ids = [s.id for s in repo.samples[:60]]
        sub = subset_repository(repo, ids)
        assert len(sub) == 60
        assert sub.compression.output_dim == repo.compression.output_dim

    def test_timed_point_reports_query_ms(self, bench):
        repo, test = bench
        config = PipelineConfig(r=8, k=2, m=2, seed=5)
        reports = run_suite(
            repo, test, [{"name": "timed"}], base_config=config, timed=True
        )
        assert reports[0].fit_seconds is not None and reports[0].fit_seconds >= 0
        assert reports[0].query_ms is not None and reports[0].query_ms > 0
