"""Pipeline orchestration: provenance, determinism, router-mode equivalence,
snapshot round trips, and verdict contracts."""

import numpy as np
import pytest

from moses.pipeline import (
    PipelineConfig,
    fit_pipeline,
    load_pipeline,
    snapshot,
)
from moses.repository import ingest
from moses.synth import synth_benchmark

from oracles import make_repo_records


def two_style_repo(rng, n_per_style=20, separation=4.0):
    pts, styles, labels, scores = [], [], [], []
    for si, style in enumerate(("alpha", "beta")):
        center = separation * (1 if si == 0 else -1)
        for i in range(n_per_style):
            pts.append([center + 0.4 * rng.normal(), 0.3 * rng.normal()])
            styles.append(style)
            label = i % 2
            labels.append(label)
            scores.append(si * 2.0 + (0.0 if label else 1.0) + 0.2 * rng.normal())
    return ingest(
        make_repo_records(
            np.array(pts), styles=styles, labels=labels, scores=scores
        ),
        r=2,
    )


def query_for(repo, sample):
    return dict(
        text=sample.text,
        embedding=sample.embedding,
        token_logprobs=list(sample.token_logprobs),
        score=sample.score,
    )


class TestFitPipeline:
    def test_disabled_router_single_group(self):
        rng = np.random.default_rng(0)
        repo = two_style_repo(rng)
        model = fit_pipeline(repo, PipelineConfig(router_mode="disabled", r=2, seed=1))
        assert len(model.indexes) == 1
        assert model.indexes[0].prototypes.shape[1] == 1
        assert sorted(model.indexes[0].members[0]) == sorted(
            s.id for s in repo.samples
        )

    def test_two_style_provenance(self):
        rng = np.random.default_rng(1)
        repo = two_style_repo(rng)
        model = fit_pipeline(repo, PipelineConfig(k=1, m=1, r=2, seed=2))
        sample = repo.samples[0]
        verdict = model.detect(**query_for(repo, sample))
        activated_styles = {
            repo.by_id(i).style for i in verdict.activation.sample_ids
        }
        assert activated_styles == {sample.style}

    def test_fit_requires_both_labels_per_style(self):
        rng = np.random.default_rng(2)
        repo = two_style_repo(rng)
        ids = [s.id for s in repo.samples if s.style != "alpha" or s.label == 1]
        from moses.evaluation import subset_repository

        skewed = subset_repository(repo, ids)
        with pytest.raises(ValueError):
            fit_pipeline(skewed, PipelineConfig(k=1, m=1, r=2))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            PipelineConfig(router_mode="sideways")
        with pytest.raises(ValueError):
            PipelineConfig(k=0)
        with pytest.raises(ValueError):
            PipelineConfig(feature_mask=("nope",))


class TestDetect:
    def test_verdict_contract(self):
        rng = np.random.default_rng(3)
        repo = two_style_repo(rng)
        model = fit_pipeline(repo, PipelineConfig(k=2, m=2, r=2, seed=3))
        verdict = model.detect(**query_for(repo, repo.samples[5]))
        assert verdict.label in (0, 1)
        assert 0.0 < verdict.probability < 1.0
        assert verdict.confidence == max(verdict.probability, 1 - verdict.probability)
        assert 0.5 <= verdict.confidence < 1.0
        assert (verdict.label == 1) == (verdict.probability > 0.5)
        assert verdict.threshold_variance >= 0.0
        assert len(verdict.activation.prototype_refs) == 2

    def test_label_monotone_in_score(self):
        rng = np.random.default_rng(4)
        repo = two_style_repo(rng)
        model = fit_pipeline(repo, PipelineConfig(k=1, m=2, r=2, seed=4))
        base = query_for(repo, repo.samples[0])
        labels = []
        for tau in np.linspace(-5, 5, 21):
            q = dict(base, score=float(tau))
            labels.append(model.detect(**q).label)
        # raising the AI-direction score must never flip AI back to human
        flips = [(a, b) for a, b in zip(labels, labels[1:]) if b > a]
        assert not flips

    def test_disabled_equals_full_activation(self):
        rng = np.random.default_rng(5)
        repo = two_style_repo(rng)
        disabled = fit_pipeline(
            repo, PipelineConfig(router_mode="disabled", r=2, seed=6)
        )
        full = fit_pipeline(
            repo, PipelineConfig(k=2, m=4, r=2, seed=6)
        )
        for sample in repo.samples[:8]:
            q = query_for(repo, sample)
            a = disabled.detect(**q)
            b = full.detect(**q)
            assert a.label == b.label
            assert abs(a.probability - b.probability) < 1e-9

    def test_boosted_kind_omits_variance(self):
        rng = np.random.default_rng(6)
        repo = two_style_repo(rng)
        model = fit_pipeline(
            repo, PipelineConfig(cte_kind="boosted", k=1, m=2, r=2, seed=7, n_trees=10)
        )
        verdict = model.detect(**query_for(repo, repo.samples[3]))
        assert verdict.threshold_variance is None

    def test_cache_reused_across_queries(self):
        rng = np.random.default_rng(7)
        repo = two_style_repo(rng)
        model = fit_pipeline(repo, PipelineConfig(k=1, m=1, r=2, seed=8))
        for sample in repo.samples[:6]:
            model.detect(**query_for(repo, sample))
        assert len(model._cache) <= 2

    def test_classification_mode_activates_whole_style(self):
        rng = np.random.default_rng(8)
        repo = two_style_repo(rng)
        model = fit_pipeline(
            repo, PipelineConfig(router_mode="classification", k=2, r=2, seed=9)
        )
        sample = repo.samples[0]
        verdict = model.detect(**query_for(repo, sample))
        expected = {s.id for s in repo.samples if s.style == sample.style}
        assert set(verdict.activation.sample_ids) == expected


class TestDeterminismAndSnapshot:
    def test_same_seed_same_snapshot_bytes(self, tmp_path):
        repo, test = synth_benchmark(11, 25)
        for run in ("one", "two"):
            config = PipelineConfig(k=2, m=2, r=8, seed=11)
            model = fit_pipeline(repo, config)
            snapshot(model, tmp_path / f"{run}.json")
        assert (tmp_path / "one.json").read_bytes() == (
            tmp_path / "two.json"
        ).read_bytes()

    def test_loaded_model_detects_identically(self, tmp_path):
        repo, test = synth_benchmark(12, 25)
        config = PipelineConfig(k=2, m=2, r=8, seed=12)
        model = fit_pipeline(repo, config)
        snapshot(model, tmp_path / "m.json")
        clone = load_pipeline(tmp_path / "m.json")
        for q in test[:10]:
            a = model.detect(q["text"], q["embedding"], q["token_logprobs"], q["score"])
            b = clone.detect(q["text"], q["embedding"], q["token_logprobs"], q["score"])
            assert a.label == b.label
            assert a.probability == b.probability
            assert a.activation.prototype_refs == b.activation.prototype_refs

    def test_detect_deterministic_for_fitted_model(self):
        repo, test = synth_benchmark(13, 25)
        model = fit_pipeline(repo, PipelineConfig(k=2, m=2, r=8, seed=13))
        q = test[0]
        a = model.detect(q["text"], q["embedding"], q["token_logprobs"], q["score"])
        b = model.detect(q["text"], q["embedding"], q["token_logprobs"], q["score"])
        assert a == b

    def test_unknown_snapshot_version_rejected(self, tmp_path):
        import json

        from moses.errors import ParseError, VersionError

        repo, _ = synth_benchmark(14, 25)
        model = fit_pipeline(repo, PipelineConfig(k=2, m=2, r=8, seed=14))
        path = tmp_path / "m.json"
        snapshot(model, path)
        doc = json.loads(path.read_text())
        doc["schema_version"] = 42
        path.write_text(json.dumps(doc))
        with pytest.raises(VersionError):
            load_pipeline(path)
        path.write_text(path.read_text()[:100])
        with pytest.raises(ParseError):
            load_pipeline(path)


class TestSpecExamples:
    def test_deep_human_query_labeled_human(self):
        repo, test = synth_benchmark(21, 100)
        model = fit_pipeline(repo, PipelineConfig(k=3, m=3, r=8, seed=21))
        deep = [
            q for q in test
            if q["style"] == "news" and q["label"] == 1 and q["score"] < -0.9
        ]
        assert deep
        for q in deep[:5]:
            verdict = model.detect(
                q["text"], q["embedding"], q["token_logprobs"], q["score"]
            )
            assert verdict.label == 1
            assert verdict.probability > 0.5

    def test_exact_boundary_resolves_to_ai(self):
        rng = np.random.default_rng(22)
        repo = two_style_repo(rng)
        model = fit_pipeline(
            repo, PipelineConfig(router_mode="disabled", feature_mask=(), r=2, seed=22)
        )
        probe = repo.samples[0]
        base = model.detect(
            probe.text, probe.embedding, list(probe.token_logprobs), 0.0
        )
        # feeding the model's own threshold back as the score pins p at 1/2
        boundary = model.detect(
            probe.text,
            probe.embedding,
            list(probe.token_logprobs),
            base.threshold_estimate,
        )
        assert boundary.probability == 0.5
        assert boundary.label == 0
