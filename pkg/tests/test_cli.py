import json

import pytest
from click.testing import CliRunner

from manikin.cli import main


@pytest.fixture
def runner():
    return CliRunner()


def test_run_bundled_by_name(runner, tmp_path):
    out = tmp_path / "t.csv"
    result = runner.invoke(main, ["run", "table_lean", "--out", str(out),
                                  "--set", "duration=0.5"])
    assert result.exit_code == 0, result.output
    assert "verdict: passive_so_far" in result.output
    assert out.exists()


def test_run_summary_json(runner):
    result = runner.invoke(main, ["run", "energy_drain", "--set", "duration=1.0",
                                  "--summary-json"])
    assert result.exit_code == 0, result.output
    summary = json.loads(result.output[: result.output.rindex("}") + 1])
    assert summary["scenario"] == "energy_drain"
    assert summary["steps"] == 100


def test_run_reports_schema_error(runner, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"version": 1, "name": "x"}))
    result = runner.invoke(main, ["run", str(bad)])
    assert result.exit_code != 0
    assert "invalid" in result.output or "required" in result.output


def test_verify_subset(runner):
    result = runner.invoke(main, ["verify", "--only", "3", "--only", "5"])
    assert result.exit_code == 0, result.output
    assert result.output.count("[PASS]") == 2


def test_replay_cli(runner, tmp_path):
    session = tmp_path / "s.jsonl"
    from manikin.scenario import bundled_scenario_path, load_scenario

    scn = load_scenario(bundled_scenario_path("table_lean"), ["duration=0.3"])
    session.write_text(json.dumps({
        "type": "session", "version": 1, "scenario": scn.name,
        "config": scn.config_hash, "seed": scn.seed,
    }) + "\n")
    out = tmp_path / "r.csv"
    result = runner.invoke(main, ["replay", "table_lean", str(session),
                                  "--set", "duration=0.3", "--out", str(out)])
    assert result.exit_code == 0, result.output
    assert out.exists()


def test_bench_runs(runner):
    result = runner.invoke(main, ["bench", "--scenario", "table_lean",
                                  "--steps", "40", "--repeats", "1"])
    assert result.exit_code == 0, result.output
    assert "python" in result.output
