import json

import pytest

from fdlkg import ConfigurationError, ExperimentConfig
from fdlkg.cli import EXIT_BLOWUP, EXIT_CONFIG, main


def test_defaults_and_overrides():
    cfg = ExperimentConfig()
    assert cfg["run"]["alpha"] == 0.2 and cfg["noise"]["profile"] == "inverse_sq"
    cfg.set_override("run.alpha=0.1")
    cfg.set_override("run.alphas = 0.4, 0.2")
    cfg.set_override("run.burn_in=auto")
    assert cfg["run"]["alpha"] == 0.1 and cfg["run"]["alphas"] == [0.4, 0.2]
    assert cfg["run"]["burn_in"] is None


@pytest.mark.parametrize("bad", ["run.alpah=0.1", "runs.alpha=0.1", "alpha=0.1", "run.chains=many",
                                 "run.checkpoint=maybe"])
def test_strict_overrides(bad):
    with pytest.raises(ConfigurationError):
        ExperimentConfig().set_override(bad)


def test_config_file(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text("[domain]\nN = 8\n[run]\nalpha = 0.5\n")
    cfg = ExperimentConfig.from_file(p)
    assert cfg["domain"]["N"] == 8 and cfg.basis().N == 8 and cfg.params().alpha == 0.5
    p.write_text("[domain]\nmodes = 8\n")
    with pytest.raises(ConfigurationError, match="domain.modes"):
        ExperimentConfig.from_file(p)
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_file(tmp_path / "missing.ini")


def test_content_hash_tracks_inputs():
    a, b = ExperimentConfig(), ExperimentConfig()
    assert a.content_hash() == b.content_hash()
    b.set_override("run.dt=0.01")
    assert a.content_hash() != b.content_hash()
    assert len(a.content_hash()) == 40


def test_selftest_writes_summary(tmp_path):
    out = tmp_path / "st"
    assert main(["selftest", "--set", "experiment.selftest_states=500", "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["results"]["passed"] and summary["results"]["total_violations"] == 0
    assert summary["config"]["experiment"]["selftest_states"] == 500
    assert summary["seed"] == 20240601 and len(summary["content_hash"]) == 40
    assert (out / "properties.csv").read_text().startswith("property,violations,worst_relative_gap")


def test_rerun_is_byte_identical(tmp_path):
    args = ["simulate", "--set", "run.T=2", "--seed", "5"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    for name in ("summary.json", "trajectory.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_config_error_exit_code(tmp_path, capsys):
    assert main(["selftest", "--set", "domain.modes=3", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "domain.modes" in capsys.readouterr().err
    assert main(["simulate", "--set", "run.alpha=2", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["selftest", "--threads", "0", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_blowup_exit_code(tmp_path, capsys):
    code = main(["simulate", "--set", "experiment.y0_radius=1e4", "--set", "run.dt=0.5",
                 "--set", "run.T=50", "--out", str(tmp_path)])
    assert code == EXIT_BLOWUP
    assert "blowup" in capsys.readouterr().err


def test_linear_check_subcommand(tmp_path):
    out = tmp_path / "lin"
    code = main(["linear-check", "--set", "run.T=120", "--set", "run.chains=8", "--set", "run.thin=2",
                 "--set", "experiment.oracle_cases=12", "--set", "experiment.exp_ensemble=100",
                 "--set", "experiment.exp_T=2", "--out", str(out)])
    assert code == 0
    res = json.loads((out / "summary.json").read_text())["results"]
    assert res["oracle_equivalence"]["max_cov_deviation"] <= 1e-10
    assert set(res["moment_bounds"]) == {"1", "2", "3"}
