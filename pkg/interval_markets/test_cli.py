"""
Tests for the command-line interface
"""

import os

import pytest
from typer.testing import CliRunner

from interval_markets.cli import app, fmt
from interval_markets.errors import EXIT_ENGINE, EXIT_IO, EXIT_VALIDATION
from interval_markets.services.lcmm_tree import LcmmTree

runner = CliRunner()


def invoke(*args):
    return runner.invoke(app, [str(arg) for arg in args])


@pytest.fixture
def lmsr_market(state_path):
    result = invoke("new", state_path, "--engine", "lmsr-tree", "--b", "1")
    assert result.exit_code == 0, result.output
    return state_path


def test_fmt_keeps_twelve_digits():
    assert fmt(0.75) == "0.750000000000"
    assert fmt(2.0) == "2.00000000000"


def test_new_reports_bound(state_path):
    result = invoke("new", state_path, "--engine", "lmsr-tree", "--b", "1")
    assert result.stdout.strip() == "loss bound per bit of precision 0.693147180560"
    assert os.path.exists(state_path)
    assert os.path.exists(state_path.replace(".json", ".trades.jsonl"))


def test_new_lcmm_schedules(tmp_path):
    result = invoke("new", tmp_path / "a.json", "--engine", "lcmm", "--levels", "1,1")
    assert result.stdout.strip() == "loss bound 2.07944154168"
    result = invoke("new", tmp_path / "b.json", "--engine", "lcmm", "--geometric", "0.5", "0.5")
    assert result.stdout.strip() == "loss bound 1.38629436112"
    result = invoke("new", tmp_path / "c.json", "--engine", "lcmm", "--split", "4:0.5/8:0.5", "--budget", "8")
    assert result.exit_code == 0


def test_new_rejects_ambiguous_schedule(tmp_path):
    result = invoke("new", tmp_path / "a.json", "--engine", "lcmm", "--levels", "1", "--geometric", "1", "0.5")
    assert result.exit_code == EXIT_VALIDATION
    assert invoke("new", tmp_path / "b.json", "--engine", "dense", "--b", "1").exit_code == EXIT_VALIDATION
    assert invoke("new", tmp_path / "c.json", "--engine", "amm", "--b", "1").exit_code == EXIT_VALIDATION


def test_price_cost_buy(lmsr_market):
    assert invoke("price", lmsr_market, "1/4", "1").stdout.strip() == "0.750000000000"
    quote = invoke("cost", lmsr_market, "0", "1/4", "1").stdout.strip()
    assert quote.startswith("0.357372")
    assert invoke("buy", lmsr_market, "0", "1/4", "1").stdout.strip() == quote
    assert invoke("price", lmsr_market, "0", "0.25").stdout.strip().startswith("0.475366")


def test_selling_through_the_cli(lmsr_market):
    result = invoke("buy", "--", lmsr_market, "1/2", "1", "-1")
    assert result.exit_code == 0, result.output
    assert float(result.stdout) < 0.0


def test_validation_errors(lmsr_market):
    assert invoke("price", lmsr_market, "1/3", "1").exit_code == EXIT_VALIDATION
    assert invoke("price", lmsr_market, "1/2", "1/4").exit_code == EXIT_VALIDATION
    assert invoke("cost", lmsr_market, "0", "1/2", "nan").exit_code == EXIT_VALIDATION


def test_precision_beyond_schedule(state_path):
    invoke("new", state_path, "--engine", "lcmm", "--levels", "1,1")
    result = invoke("buy", state_path, "1/8", "1", "1")
    assert result.exit_code == EXIT_VALIDATION
    assert "error:" in result.output


def test_missing_state_is_io_error(tmp_path):
    assert invoke("price", tmp_path / "absent.json", "0", "1/2").exit_code == EXIT_IO


def test_locked_state(lmsr_market):
    open(f"{lmsr_market}.lock", "w").close()
    assert invoke("buy", lmsr_market, "0", "1/2", "1").exit_code == EXIT_IO


def test_corrupt_snapshot_exit_code(lmsr_market):
    with open(lmsr_market, "w") as f:
        f.write("{not json")
    assert invoke("show", lmsr_market).exit_code == EXIT_IO


def test_replay_and_audit(tmp_path):
    state = str(tmp_path / "dense.json")
    invoke("new", state, "--engine", "dense", "--b", "1", "--K", "2")
    invoke("buy", state, "0", "1/4", "1")

    log = state.replace(".json", ".trades.jsonl")
    result = invoke("replay", log, "--engine", "dense", "--b", "1", "--K", "2", "--write", tmp_path / "copy.json")
    assert result.exit_code == 0, result.output
    assert result.stdout.strip().startswith("[0/2^0, 1/2^2) 0.475366")
    assert os.path.exists(tmp_path / "copy.json")

    lines = invoke("audit", state).stdout.splitlines()
    assert lines[0] == "trades 1"
    assert lines[1].startswith("collected 0.357372")
    assert lines[2].startswith("worst-case loss 0.642627")
    assert lines[3] == "loss bound 1.38629436112"


def test_audit_at_precision(lmsr_market):
    invoke("buy", lmsr_market, "1/8", "1/4", "2")
    lines = invoke("audit", lmsr_market, "--precision", "1").stdout.splitlines()
    assert float(lines[2].split()[-1]) < 0.0
    assert lines[3] == "loss bound 0.693147180560"
    assert invoke("audit", lmsr_market, "--precision", "40").exit_code == EXIT_VALIDATION


def test_show(lmsr_market):
    invoke("buy", lmsr_market, "1/4", "1/2", "1")
    lines = invoke("show", lmsr_market).stdout.splitlines()
    assert lines[0].startswith("engine ") and '"lmsr_tree"' in lines[0]
    assert lines[1] == "nodes 5"
    assert lines[2] == "trades 1"


def test_lcmm_show_and_audit_report_coherence(state_path):
    invoke("new", state_path, "--engine", "lcmm", "--levels", "0.4,0.3,0.2,0.1")
    invoke("buy", state_path, "1/4", "3/4", "50")
    invoke("buy", "--", state_path, "3/16", "1", "-50")
    show = invoke("show", state_path).stdout.splitlines()
    assert show[-1].startswith("coherence violation ")
    assert float(show[-1].split()[-1]) < 1e-9
    audit = invoke("audit", state_path)
    assert audit.exit_code == 0, audit.output
    assert audit.stdout.splitlines()[-1].startswith("coherence violation ")


def test_incoherent_lcmm_fails_audit(state_path, monkeypatch):
    invoke("new", state_path, "--engine", "lcmm", "--levels", "1,1")
    invoke("buy", state_path, "1/2", "1", "1")
    monkeypatch.setattr(LcmmTree, "coherence_violation", lambda self: 1e-3)
    result = invoke("audit", state_path)
    assert result.exit_code == EXIT_ENGINE
    assert "Levels disagree" in result.output


def test_simulate(tmp_path):
    config = tmp_path / "sim.conf"
    config.write_text("n_traders = 2\nK = 4\ncandidates_per_turn = 3\nmarkets = lmsr@2\n"
                      "levels = 2\nn_traces = 1\nmax_steps = 2\n")
    out = tmp_path / "results.csv"
    result = invoke("simulate", config, out)
    assert result.exit_code == 0, result.output
    assert out.read_text().splitlines()[0] == "trace,step,market,level,kl,cumulative_cost"
    assert "lmsr@2 level 2" in result.stdout


def test_simulate_reports_bad_key(tmp_path):
    config = tmp_path / "sim.conf"
    config.write_text("n_trader = 2\n")
    result = invoke("simulate", config, tmp_path / "out.csv")
    assert result.exit_code == EXIT_VALIDATION
    assert "n_trader" in result.output


def test_sweep_budgets(tmp_path):
    config = tmp_path / "sim.conf"
    config.write_text("n_traders = 2\nK = 4\ncandidates_per_turn = 2\nmarkets = lmsr@2\n"
                      "levels = 2\nn_traces = 1\nmax_steps = 1\n")
    out = tmp_path / "sweep.csv"
    result = invoke("sweep", config, out, "--budgets", "1,4")
    assert result.exit_code == 0, result.output
    assert out.read_text().splitlines()[0] == "budget,market,level,step,kl"
    assert len(out.read_text().splitlines()) == 3
    assert invoke("sweep", config, out, "--budgets", "0").exit_code == EXIT_VALIDATION
