"""Config round-trips, report plumbing, runner artifacts and the CLI.

Runs here shrink the registered step counts through dynamics overrides;
full-budget runs belong to the acceptance suite.
"""

import json

import numpy as np
import pytest

from orbitgauge.cli import main as cli_main
from orbitgauge.errors import ConfigError
from orbitgauge.experiments import (
    EXPERIMENT_NAMES,
    ExperimentConfig,
    RunReport,
    get_entry,
    list_experiments,
    run_experiment,
)
from orbitgauge.experiments.config import compare

SHORT_RADIAL = dict(total_steps=15_000, thinning=10)


def radial_config(tmp_path, name="out", **kwargs):
    return ExperimentConfig(
        experiment="radial",
        dynamics=dict(SHORT_RADIAL),
        output_dir=str(tmp_path / name),
        **kwargs,
    )


class TestExperimentConfig:
    def test_json_roundtrip(self, tmp_path):
        cfg = ExperimentConfig(
            experiment="radial", seed=7, dynamics={"eta": 1e-3},
            model_params={"d": 5}, emit_samples=True)
        path = tmp_path / "config.json"
        cfg.to_json(path)
        back = ExperimentConfig.from_json(path)
        assert back == cfg

    def test_unknown_config_key(self):
        with pytest.raises(ConfigError, match="unknown config keys"):
            ExperimentConfig.from_dict({"experiment": "radial", "stepss": 3})

    def test_unknown_dynamics_key(self):
        with pytest.raises(ConfigError, match="unknown dynamics override"):
            ExperimentConfig(experiment="radial", dynamics={"step_size": 0.1})

    def test_missing_experiment_name(self):
        with pytest.raises(ConfigError, match="experiment"):
            ExperimentConfig.from_dict({"seed": 3})

    def test_model_params_must_be_mapping(self):
        with pytest.raises(ConfigError, match="mapping"):
            ExperimentConfig(experiment="radial", model_params=[1, 2])


class TestRunReport:
    def test_comparison_requires_metric(self):
        with pytest.raises(ConfigError, match="missing from the report"):
            RunReport(experiment="x", config={}, metrics={},
                      comparisons=[{"metric": "ks", "kind": "<",
                                    "target": 1.0, "passed": True,
                                    "provenance": "oracle"}])

    def test_passed_requires_ok_and_all_comparisons(self):
        comp = compare({"a": 1.0}, "a", "<", 2.0, "oracle")
        rep = RunReport(experiment="x", config={}, metrics={"a": 1.0},
                        comparisons=[comp])
        assert rep.passed
        rep.status = "failed"
        assert not rep.passed

    def test_compare_kinds(self):
        m = {"v": 1.0}
        assert compare(m, "v", "<", 2.0, "p")["passed"]
        assert compare(m, "v", "<=", 1.0, "p")["passed"]
        assert compare(m, "v", ">", 2.0, "p")["passed"] is False
        assert compare(m, "v", "==", 1.0, "p")["passed"]
        rec = compare(m, "v", "within_rel", 1.05, "p", rel_tol=0.1)
        assert rec["passed"] and rec["rel_tol"] == 0.1
        with pytest.raises(ConfigError, match="comparison kind"):
            compare(m, "v", "~", 1.0, "p")

    def test_json_roundtrip(self, tmp_path):
        comp = compare({"a": 1.0}, "a", "<", 2.0, "oracle")
        rep = RunReport(experiment="x", config={"experiment": "x"},
                        metrics={"a": 1.0}, targets={"a": 2.0},
                        comparisons=[comp], timestamp="t")
        path = tmp_path / "report.json"
        rep.to_json(path)
        back = RunReport.from_json(path)
        assert back == rep
        assert json.loads(path.read_text())["passed"] is True


class TestRegistry:
    def test_nine_stable_names(self):
        assert EXPERIMENT_NAMES == (
            "attention_ts", "fourier_sparse", "group_lasso", "l1_hadamard",
            "multichannel", "radial", "rank2_completion", "relu_balance",
            "tv_recon")
        assert len(list_experiments()) == 9

    def test_unknown_name(self):
        with pytest.raises(ConfigError, match="radial"):
            get_entry("rotation")

    def test_entries_reference_known_dynamics_keys(self):
        from dataclasses import fields
        from orbitgauge.dynamics import DynamicsConfig
        valid = {f.name for f in fields(DynamicsConfig)}
        for entry in list_experiments():
            assert set(entry.dynamics) <= valid, entry.name
            for over in entry.variant_dynamics.values():
                assert set(over) <= valid, entry.name


class TestRunExperiment:
    def test_radial_artifacts(self, tmp_path):
        report = run_experiment(radial_config(tmp_path, emit_samples=True))
        assert report.status == "ok"
        out = tmp_path / "out"
        for name in ("report.json", "series.csv", "samples.csv",
                     "density_empirical.csv", "density_gauge.csv",
                     "density_naive.csv"):
            assert name in report.artifacts
            assert (out / name).exists(), name
        assert set(report.targets) == {"ks_gauge", "ks_ratio"}
        assert report.metrics["n_samples"] == len(
            (out / "samples.csv").read_text().strip().splitlines()) - 1

    def test_series_csv_parses_back(self, tmp_path):
        run_experiment(radial_config(tmp_path))
        rows = (tmp_path / "out" / "series.csv").read_text().strip().splitlines()
        assert rows[0] == "step_index,loss,radius"
        data = np.array([[float(x) for x in r.split(",")] for r in rows[1:]])
        assert np.all(np.isfinite(data))
        # thinning 10, burn-in 10% of 15000 steps
        assert data[0, 0] == 1510.0
        assert data.shape == ((15_000 - 1_500) // 10, 3)

    def test_deterministic_modulo_clock(self, tmp_path):
        def normalized(raw):
            doc = json.loads(raw)
            doc.pop("timestamp")
            doc.pop("wall_clock_seconds")
            return doc

        cfg = radial_config(tmp_path)
        run_experiment(cfg)
        first = (tmp_path / "out" / "report.json").read_bytes()
        run_experiment(cfg)
        second = (tmp_path / "out" / "report.json").read_bytes()
        assert normalized(first) == normalized(second)

    def test_default_seed_fallback(self, tmp_path):
        unset = run_experiment(radial_config(tmp_path, name="a"))
        explicit = run_experiment(radial_config(tmp_path, name="b",
                                                seed=get_entry("radial").default_seed))
        other = run_experiment(radial_config(tmp_path, name="c", seed=123))
        assert unset.metrics["ks_gauge"] == explicit.metrics["ks_gauge"]
        assert unset.metrics["ks_gauge"] != other.metrics["ks_gauge"]

    def test_divergence_writes_failed_report_only(self, tmp_path):
        out = tmp_path / "boom"
        cfg = ExperimentConfig(
            experiment="rank2_completion",
            dynamics={"eta": 50.0, "total_steps": 3000, "thinning": 100},
            output_dir=str(out))
        report = run_experiment(cfg)
        assert report.status == "failed"
        assert not report.passed
        assert "step" in report.error
        assert report.artifacts == ["report.json"]
        assert sorted(p.name for p in out.iterdir()) == ["report.json"]
        assert RunReport.from_json(out / "report.json").status == "failed"

    def test_model_params_flow_through(self, tmp_path):
        cfg = ExperimentConfig(
            experiment="radial", model_params={"d": 4},
            dynamics=dict(SHORT_RADIAL), output_dir=str(tmp_path / "d4"))
        report = run_experiment(cfg)
        assert report.status == "ok"
        assert report.config["model_params"] == {"d": 4}


class TestCli:
    def test_list(self, capsys):
        assert cli_main(["list"]) == 0
        out = capsys.readouterr().out
        for name in EXPERIMENT_NAMES:
            assert name in out

    def test_run_with_flags(self, tmp_path, capsys):
        code = cli_main([
            "run", "radial", "--seed", "4", "--steps", "15000",
            "--out", str(tmp_path / "cli")])
        out = capsys.readouterr().out
        assert (tmp_path / "cli" / "report.json").exists()
        assert "ks_gauge" in out
        assert code in (0, 1)  # comparisons may miss at this short budget

    def test_run_config_name_mismatch(self, tmp_path, capsys):
        cfg = ExperimentConfig(experiment="radial")
        path = tmp_path / "c.json"
        cfg.to_json(path)
        code = cli_main(["run", "relu_balance", "--config", str(path)])
        assert code == 2
        assert "error:" in capsys.readouterr().err

    def test_unknown_experiment_errors(self, capsys):
        assert cli_main(["run", "spiral"]) == 2
        assert "unknown experiment" in capsys.readouterr().err
