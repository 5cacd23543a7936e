import csv
import json

import pytest
from click.testing import CliRunner

from pushcache import __version__, cli as cli_module
from pushcache.cli import cli
from pushcache.errors import ConvergenceError

TWO_POINT = {"B": 1, "eta": 2.0, "pmf": [0.5, 0.5]}


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def policy_file(runner, write_config, tmp_path):
    out = tmp_path / "policy.json"
    result = runner.invoke(cli, ["solve", "-c", str(write_config(TWO_POINT)), "--eps", "1e-10", "-o", str(out)])
    assert result.exit_code == 0, result.output
    return out


def test_version(runner):
    result = runner.invoke(cli, ["version"])
    assert result.exit_code == 0
    assert __version__ in result.output


def test_solve_writes_policy_and_report(policy_file):
    doc = json.loads(policy_file.read_text(encoding="utf-8"))
    assert doc["average_cost"] == pytest.approx(0.5, abs=1e-9)
    assert doc["config"]["B"] == 1
    report = json.loads(policy_file.with_suffix(".report.json").read_text(encoding="utf-8"))
    assert report["converged"] is True


def test_solve_rejects_malformed_config(runner, write_config, tmp_path):
    path = write_config({"B": 1, "eta": 2.0, "pmf": [1.5, -0.5]})
    result = runner.invoke(cli, ["solve", "-c", str(path), "-o", str(tmp_path / "p.json")])
    assert result.exit_code == 2
    assert "Error" in result.output


def test_solve_reports_non_convergence(runner, write_config, tmp_path, monkeypatch):
    def stuck(cfg, config):
        raise ConvergenceError("span stuck at 0.1", iterations=5, residual=0.1)

    monkeypatch.setattr(cli_module, "solve_instance", stuck)
    result = runner.invoke(cli, ["solve", "-c", str(write_config(TWO_POINT)), "-o", str(tmp_path / "p.json")])
    assert result.exit_code == 3


def test_simulate_is_reproducible(runner, policy_file, tmp_path):
    outputs = []
    for name in ("a.json", "b.json"):
        out = tmp_path / name
        result = runner.invoke(
            cli, ["simulate", "-p", str(policy_file), "-T", "2000", "--seed", "5", "-o", str(out)]
        )
        assert result.exit_code == 0, result.output
        outputs.append(out.read_text(encoding="utf-8"))
    assert outputs[0] == outputs[1]
    assert json.loads(outputs[0])["seed"] == 5


def test_simulate_writes_slot_trace(runner, policy_file, tmp_path):
    trace = tmp_path / "slots.csv"
    result = runner.invoke(
        cli,
        ["simulate", "-p", str(policy_file), "-T", "50", "--seed", "1",
         "-o", str(tmp_path / "r.json"), "--trace", str(trace)],
    )
    assert result.exit_code == 0, result.output
    with open(trace, newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["t", "b", "x", "y", "energy"]
    assert len(rows) == 51


def test_simulate_rejects_mismatched_config(runner, policy_file, write_config):
    other = write_config({"B": 2, "eta": 2.0, "pmf": [0.5, 0.5]}, name="other.json")
    result = runner.invoke(cli, ["simulate", "-p", str(policy_file), "-c", str(other), "-T", "10", "--seed", "0"])
    assert result.exit_code == 2


@pytest.mark.parametrize("args", [["-T", "0"], ["-T", "10", "--b0", "5"], ["-T", "10", "--eps", "0"]])
def test_simulate_rejects_bad_arguments(runner, policy_file, args):
    result = runner.invoke(cli, ["simulate", "-p", str(policy_file), "--seed", "0", *args])
    assert result.exit_code == 2
    assert isinstance(result.exception, SystemExit)


def test_simulate_eps_sets_stored_cost_slack(runner, policy_file, tmp_path):
    doc = json.loads(policy_file.read_text(encoding="utf-8"))
    doc["average_cost"] *= 1.0 + 1e-6
    policy_file.write_text(json.dumps(doc), encoding="utf-8")
    args = ["simulate", "-p", str(policy_file), "-T", "10", "--seed", "0", "-o", str(tmp_path / "r.json")]
    assert runner.invoke(cli, args).exit_code == 2
    result = runner.invoke(cli, [*args, "--eps", "1e-3"])
    assert result.exit_code == 0, result.output


def test_baselines(runner, write_config, tmp_path):
    out = tmp_path / "baselines.json"
    schedule = tmp_path / "schedule.csv"
    result = runner.invoke(
        cli,
        ["baselines", "-c", str(write_config(TWO_POINT)), "-T", "100", "--replicas", "2",
         "--seed", "3", "--schedule", str(schedule), "-o", str(out)],
    )
    assert result.exit_code == 0, result.output
    summary = json.loads(out.read_text(encoding="utf-8"))
    assert summary["cost_no_buffer"] == pytest.approx(0.5)
    assert summary["cost_taut_mean"] > 0.0
    with open(schedule, newline="", encoding="utf-8") as f:
        assert next(csv.reader(f)) == ["t", "x_t", "y_t", "Y_t", "R_t", "energy_t"]


def test_sweep_from_spec(runner, tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({
        "variable": "buffer-size", "values": [0, 1], "etas": [1.4],
        "uniform_max": 2, "replicas": 2, "steps": 200,
    }), encoding="utf-8")
    out = tmp_path / "sweep.csv"
    result = runner.invoke(cli, ["sweep", "--spec", str(spec), "--seed", "3", "-o", str(out), "--gnuplot"])
    assert result.exit_code == 0, result.output
    with open(out, newline="", encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    assert [row["variable"] for row in rows] == ["0", "1"]
    assert out.with_suffix(".gp").exists()


def test_sweep_rejects_bad_spec(runner, tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"variable": "buffer-size", "values": []}), encoding="utf-8")
    result = runner.invoke(cli, ["sweep", "--spec", str(spec), "-o", str(tmp_path / "s.csv")])
    assert result.exit_code == 2


def test_bench_from_spec(runner, tmp_path):
    spec = tmp_path / "bench.json"
    spec.write_text(json.dumps({"variable": "runtime", "values": [1, 2], "replicas": 0}), encoding="utf-8")
    out = tmp_path / "bench.csv"
    result = runner.invoke(cli, ["bench", "--spec", str(spec), "--repeats", "1", "-o", str(out)])
    assert result.exit_code == 0, result.output
    with open(out, newline="", encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    assert [row["X"] for row in rows] == ["1", "3"]


def test_validate_single_suite(runner, tmp_path):
    result = runner.invoke(cli, ["validate", "--suite", "hall-counterexample", "-o", str(tmp_path)])
    assert result.exit_code == 0, result.output
    assert "passed" in result.output


def test_validate_echoes_generated_seed(runner, tmp_path, monkeypatch):
    seen = {}

    def record(seed, **kwargs):
        seen.update(seed=seed, eps=kwargs["eps"])
        return []

    monkeypatch.setattr(cli_module, "run_validation", record)
    monkeypatch.setattr(cli_module, "fresh_seed", lambda: 4242)
    result = runner.invoke(cli, ["validate", "--eps", "1e-6", "-o", str(tmp_path)])
    assert result.exit_code == 0, result.output
    assert "seed: 4242" in result.output
    assert seen == {"seed": 4242, "eps": 1e-6}


def test_validate_rejects_non_positive_eps(runner, tmp_path):
    result = runner.invoke(cli, ["validate", "--eps", "0", "-o", str(tmp_path)])
    assert result.exit_code == 2


def test_validate_unknown_suite(runner, tmp_path):
    result = runner.invoke(cli, ["validate", "--suite", "bogus", "-o", str(tmp_path)])
    assert result.exit_code == 2
