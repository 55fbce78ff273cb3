"""
End-to-end tests for the command-line tool.
"""

import json
import logging

import pandas as pd
import pytest

from impulsegame.cli import EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, build_parser, run


def _write_config(tmp_path, name="run.json", **overrides):
    config = {
        "problem": {"name": "constant", "params": {"f0": 2.0, "lam": 1.0, "kappa": 1.0}},
        "grid": {"lo": [-1.0], "hi": [1.0], "nodes": [21]},
        "forms": ["L", "U"],
    }
    config.update(overrides)
    path = tmp_path / name
    path.write_text(json.dumps(config))
    return path


# -- Test fixtures --

@pytest.fixture(autouse=True)
def isolated(tmp_path, monkeypatch):
    """Run from an empty directory and restore the root logger afterwards."""
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("QVI_THREADS", raising=False)
    monkeypatch.delenv("QVI_LOG_LEVEL", raising=False)
    root = logging.getLogger()
    handlers, level = root.handlers[:], root.level
    yield
    root.handlers[:] = handlers
    root.setLevel(level)


@pytest.fixture
def out(tmp_path):
    return tmp_path / "out"


# -- Parser Tests --

def test_parser_requires_a_subcommand():
    parser = build_parser()
    args = parser.parse_args(["solve", "--config", "run.json", "--threads", "2"])
    assert (args.command, args.config, args.threads, args.out) == ("solve", "run.json", 2, None)


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["bogus", "--config", "run.json"],
        ["solve"],
        ["solve", "--config", "run.json", "--threads", "two"],
    ],
)
def test_usage_errors(argv):
    assert run(argv) == EXIT_USAGE


def test_version():
    assert run(["--version"]) == EXIT_OK


def test_unknown_log_level(tmp_path):
    config = _write_config(tmp_path)
    assert run(["--log-level", "chatty", "solve", "--config", str(config)]) == EXIT_USAGE


def test_missing_and_invalid_config(tmp_path, out):
    assert run(["solve", "--config", str(tmp_path / "missing.json"), "--out", str(out)]) == EXIT_USAGE
    config = _write_config(tmp_path, forms=[])
    assert run(["solve", "--config", str(config), "--out", str(out)]) == EXIT_USAGE


# -- solve --

def test_solve_writes_fields_and_reports(tmp_path, out):
    config = _write_config(tmp_path)
    assert run(["solve", "--config", str(config), "--out", str(out)]) == EXIT_OK

    for form in ("L", "U"):
        field = pd.read_csv(out / f"field_{form}.csv")
        assert list(field.columns) == ["x0", "value"]
        assert (field["value"] - 2.0).abs().max() <= 1e-8

        report = json.loads((out / f"report_{form}.json").read_text())
        assert report["converged"] is True
        assert report["field_csv_path"] == f"field_{form}.csv"
        assert report["config"]["solver"]["h"] == pytest.approx(0.1)

    validation = json.loads((out / "validation.json").read_text())
    assert validation["fatal"] is False


def test_zero_cost_is_a_validation_failure(tmp_path, out):
    config = _write_config(tmp_path, problem={"name": "constant", "params": {"kappa": 0.0}})
    assert run(["solve", "--config", str(config), "--out", str(out)]) == EXIT_VALIDATION


def test_solve_is_deterministic(tmp_path):
    config = _write_config(tmp_path)
    assert run(["solve", "--config", str(config), "--out", str(tmp_path / "a"), "--threads", "1"]) == EXIT_OK
    assert run(["solve", "--config", str(config), "--out", str(tmp_path / "b"), "--threads", "4"]) == EXIT_OK
    for form in ("L", "U"):
        first = (tmp_path / "a" / f"field_{form}.csv").read_bytes()
        second = (tmp_path / "b" / f"field_{form}.csv").read_bytes()
        assert first == second


def test_outputs_entry_is_the_default_directory(tmp_path):
    config = _write_config(tmp_path, outputs="results/constant")
    assert run(["solve", "--config", str(config)]) == EXIT_OK
    assert (tmp_path / "results" / "constant" / "field_L.csv").exists()


# -- compare, verify, simulate --

def test_compare_reports_isaacs_gaps(tmp_path, out):
    config = _write_config(
        tmp_path,
        problem={"name": "linear1d"},
        grid={"lo": [-2.0], "hi": [2.0], "nodes": [41]},
        compare={"tolerance": 0.05},
    )
    assert run(["compare", "--config", str(config), "--out", str(out)]) == EXIT_OK
    result = json.loads((out / "compare.json").read_text())
    assert result["within_tolerance"] is True
    assert 0.0 <= result["isaacs_gap_LU"] <= 0.05
    assert result["tolerance"] == 0.05


def test_compare_without_tolerance(tmp_path, out):
    config = _write_config(tmp_path)
    assert run(["compare", "--config", str(config), "--out", str(out)]) == EXIT_OK
    result = json.loads((out / "compare.json").read_text())
    assert result["within_tolerance"] is None
    assert result["isaacs_gap_LmaxUmin"] <= 2e-10


def test_verify_passes_on_the_constant_game(tmp_path, out):
    config = _write_config(tmp_path)
    assert run(["verify", "--config", str(config), "--out", str(out)]) == EXIT_OK
    result = json.loads((out / "verify.json").read_text())
    assert result["passed"] is True
    for form in ("L", "U"):
        checks = result["forms"][form]
        assert checks["lemma1_violations"] == []
        assert checks["mu_scaling"]["ok"] is True
        assert checks["uniqueness"]["ok"] is True
        assert checks["residual_sup_norm"] <= 1e-8


def test_simulate_writes_policy_and_trajectory(tmp_path, out):
    config = _write_config(
        tmp_path,
        problem={"name": "impulse1d", "params": {"lam": 1.0, "kappa": 4.0}},
        grid={"lo": [-3.0], "hi": [3.0], "nodes": [61]},
        forms=["U"],
        simulate={"x0": [3.0], "horizon": 1.0, "h": 0.01},
    )
    assert run(["simulate", "--config", str(config), "--out", str(out)]) == EXIT_OK
    assert (out / "policy_U.csv").exists()
    assert (out / "field_U.csv").exists()

    summary = json.loads((out / "trajectory.json").read_text())
    assert summary["form"] == "U"
    assert len(summary["impulses"]) == 1
    assert summary["impulses"][0]["player"] == "eta"
    assert summary["payoff_ledger_error"] <= 1e-9
    assert summary["steps"] == 100

    trajectory = pd.read_csv(out / "trajectory.csv")
    assert trajectory["event"].tolist()[:2] == ["start", "eta"]


def test_simulate_needs_a_simulate_block(tmp_path, out):
    config = _write_config(tmp_path)
    assert run(["simulate", "--config", str(config), "--out", str(out)]) == EXIT_USAGE


if __name__ == "__main__":
    pytest.main([__file__])
