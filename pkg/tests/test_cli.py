"""End-to-end CLI contracts: exit codes, stream shapes, determinism."""

import json

import pytest

from moses.cli import main


def run(tmp_path, *argv):
    return main([str(a) for a in argv])


@pytest.fixture
def workspace(tmp_path):
    code = main(
        [
            "synth",
            "--seed", "3",
            "--n-per-cell", "30",
            "--out-repo", str(tmp_path / "repo.json"),
            "--out-test", str(tmp_path / "test.jsonl"),
        ]
    )
    assert code == 0
    return tmp_path


class TestSynthAndFit:
    def test_fit_writes_snapshot(self, workspace):
        code = main(
            [
                "fit",
                "--repo", str(workspace / "repo.json"),
                "--out", str(workspace / "model.json"),
                "--k", "2", "--m", "2", "--r", "8",
                "--cte", "logistic", "--seed", "7",
            ]
        )
        assert code == 0
        assert (workspace / "model.json").exists()

    def test_invalid_k_usage_error(self, workspace, capsys):
        code = main(
            [
                "fit",
                "--repo", str(workspace / "repo.json"),
                "--out", str(workspace / "model.json"),
                "--k", "0",
            ]
        )
        assert code == 1
        assert "k must be" in capsys.readouterr().err

    def test_rerun_byte_identical(self, workspace):
        args = [
            "fit",
            "--repo", str(workspace / "repo.json"),
            "--out", None,
            "--k", "2", "--m", "2", "--r", "8", "--seed", "5",
        ]
        outputs = []
        for name in ("m1.json", "m2.json"):
            args[4] = str(workspace / name)
            assert main(args) == 0
            outputs.append((workspace / name).read_bytes())
        assert outputs[0] == outputs[1]


class TestDetect:
    @pytest.fixture
    def model(self, workspace):
        main(
            [
                "fit",
                "--repo", str(workspace / "repo.json"),
                "--out", str(workspace / "model.json"),
                "--k", "2", "--m", "2", "--r", "8", "--seed", "7",
            ]
        )
        return workspace / "model.json"

    def test_line_counts_match(self, workspace, model):
        code = main(
            [
                "detect",
                "--model", str(model),
                "--input", str(workspace / "test.jsonl"),
                "--out", str(workspace / "verdicts.jsonl"),
            ]
        )
        assert code == 0
        inputs = (workspace / "test.jsonl").read_text().strip().splitlines()
        outputs = (workspace / "verdicts.jsonl").read_text().strip().splitlines()
        assert len(inputs) == len(outputs)
        first = json.loads(outputs[0])
        assert {"id", "label", "probability", "confidence",
                "threshold_estimate", "threshold_variance",
                "activated_prototypes"} <= set(first)

    def test_malformed_line_yields_error_record(self, workspace, model):
        bad = workspace / "bad.jsonl"
        good_line = (workspace / "test.jsonl").read_text().splitlines()[0]
        bad.write_text(good_line + "\n{not json\n" + good_line + "\n")
        code = main(
            [
                "detect",
                "--model", str(model),
                "--input", str(bad),
                "--out", str(workspace / "bad_out.jsonl"),
            ]
        )
        assert code == 0
        rows = [
            json.loads(line)
            for line in (workspace / "bad_out.jsonl").read_text().splitlines()
        ]
        assert len(rows) == 3
        assert "error" in rows[1]
        assert "error" not in rows[0] and "error" not in rows[2]

    def test_detect_deterministic(self, workspace, model):
        for name in ("v1.jsonl", "v2.jsonl"):
            main(
                [
                    "detect",
                    "--model", str(model),
                    "--input", str(workspace / "test.jsonl"),
                    "--out", str(workspace / name),
                ]
            )
        assert (workspace / "v1.jsonl").read_bytes() == (
            workspace / "v2.jsonl"
        ).read_bytes()


class TestEval:
    def test_eval_reports_accuracy(self, workspace, capsys):
        main(
            [
                "fit",
                "--repo", str(workspace / "repo.json"),
                "--out", str(workspace / "model.json"),
                "--k", "2", "--m", "2", "--r", "8", "--seed", "7",
            ]
        )
        capsys.readouterr()  # drop the fit progress line
        code = main(
            [
                "eval",
                "--model", str(workspace / "model.json"),
                "--input", str(workspace / "test.jsonl"),
                "--json",
            ]
        )
        assert code == 0
        result = json.loads(capsys.readouterr().out)
        assert 0.5 < result["accuracy"] <= 1.0
        assert "mcnemar_chi2_vs_static" in result


class TestIngest:
    def test_schema_error_exit_code(self, tmp_path, capsys):
        bad = tmp_path / "raw.jsonl"
        bad.write_text('{"id": "a", "text": "x y"}\n')
        code = main(
            ["ingest", "--input", str(bad), "--out", str(tmp_path / "r.json"), "--r", "2"]
        )
        assert code == 2
        assert "line 1" in capsys.readouterr().err

    def test_round_trip_through_files(self, workspace, tmp_path):
        # re-ingest the synthetic test split as if it were raw data
        raw = tmp_path / "raw.jsonl"
        raw.write_text((workspace / "test.jsonl").read_text())
        code = main(
            ["ingest", "--input", str(raw), "--out", str(tmp_path / "r.json"), "--r", "4"]
        )
        assert code == 0


class TestReportAndAblate:
    def test_report_writes_csv_and_figures(self, workspace):
        out = workspace / "report"
        code = main(
            ["report", "--repo", str(workspace / "repo.json"), "--out-dir", str(out)]
        )
        assert code == 0
        assert (out / "style_report.csv").exists()
        assert (out / "score_distributions.png").stat().st_size > 0
        assert (out / "condition_scores.png").stat().st_size > 0
        header = (out / "style_report.csv").read_text().splitlines()[0]
        assert header.startswith("style,label,count,mean,std")

    def test_ablate_grid(self, workspace):
        out = workspace / "ablation"
        code = main(
            [
                "ablate",
                "--repo", str(workspace / "repo.json"),
                "--input", str(workspace / "test.jsonl"),
                "--out", str(out),
                "--grid", "cte_kind=logistic;r=4|8",
                "--k", "2", "--m", "2", "--seed", "3",
            ]
        )
        assert code == 0
        lines = (out / "ablation.csv").read_text().strip().splitlines()
        assert len(lines) == 3  # header + 2 grid points
        assert (out / "ablation_accuracy.png").exists()

    def test_ablate_default_grid_covers_masks_and_baselines(self, workspace):
        out = workspace / "ablation_default"
        code = main(
            [
                "ablate",
                "--repo", str(workspace / "repo.json"),
                "--input", str(workspace / "test.jsonl"),
                "--out", str(out),
                "--k", "2", "--m", "2", "--r", "8", "--seed", "3",
            ]
        )
        assert code == 0
        rows = (out / "ablation.csv").read_text().strip().splitlines()
        names = [line.split(",")[0] for line in rows[1:]]
        assert "default" in names and "no_sar" in names and "static" in names
        assert sum(1 for n in names if n.startswith("wo_")) == 7

    def test_ablate_rerun_byte_identical(self, workspace):
        outs = []
        for name in ("ab1", "ab2"):
            out = workspace / name
            code = main(
                [
                    "ablate",
                    "--repo", str(workspace / "repo.json"),
                    "--input", str(workspace / "test.jsonl"),
                    "--out", str(out),
                    "--grid", "cte_kind=logistic|boosted",
                    "--k", "2", "--m", "2", "--r", "8", "--seed", "4",
                ]
            )
            assert code == 0
            outs.append(
                (
                    (out / "ablation.csv").read_bytes(),
                    (out / "ablation_accuracy.png").read_bytes(),
                )
            )
        assert outs[0] == outs[1]

    def test_report_rerun_byte_identical(self, workspace):
        blobs = []
        for name in ("rep1", "rep2"):
            out = workspace / name
            assert main(
                ["report", "--repo", str(workspace / "repo.json"), "--out-dir", str(out)]
            ) == 0
            blobs.append(
                (
                    (out / "style_report.csv").read_bytes(),
                    (out / "score_distributions.png").read_bytes(),
                    (out / "condition_scores.png").read_bytes(),
                )
            )
        assert blobs[0] == blobs[1]


class TestUsage:
    def test_unknown_command_exits_one(self):
        assert main(["frobnicate"]) == 1

    def test_missing_required_flag(self):
        assert main(["fit", "--repo", "nowhere.json"]) == 1


class TestConfigSources:
    def test_toml_config_with_flag_override(self, workspace):
        config = workspace / "moses.toml"
        config.write_text('k = 2\nm = 2\nr = 8\ncte_kind = "logistic"\nseed = 31\n')
        code = main(
            [
                "fit",
                "--repo", str(workspace / "repo.json"),
                "--out", str(workspace / "m_toml.json"),
                "--config", str(config),
                "--seed", "32",  # flag beats file
            ]
        )
        assert code == 0
        import json

        doc = json.loads((workspace / "m_toml.json").read_text())
        assert doc["config"]["k"] == 2
        assert doc["config"]["seed"] == 32

    def test_unknown_config_key_rejected(self, workspace, capsys):
        config = workspace / "moses.toml"
        config.write_text("bogus = 1\n")
        code = main(
            [
                "fit",
                "--repo", str(workspace / "repo.json"),
                "--out", str(workspace / "m.json"),
                "--config", str(config),
            ]
        )
        assert code == 1
        assert "bogus" in capsys.readouterr().err

    def test_env_seed_fallback(self, workspace, monkeypatch):
        import json

        monkeypatch.setenv("MOSES_SEED", "77")
        code = main(
            [
                "fit",
                "--repo", str(workspace / "repo.json"),
                "--out", str(workspace / "m_env.json"),
                "--k", "2", "--m", "2", "--r", "8",
            ]
        )
        assert code == 0
        doc = json.loads((workspace / "m_env.json").read_text())
        assert doc["config"]["seed"] == 77
