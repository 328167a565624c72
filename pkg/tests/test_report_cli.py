import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridbalance.cli import CONFIG_DIR_ENV, run_cli
from gridbalance.costs import CostBreakdown
from gridbalance.dispatch import DispatchError, Portfolio, simulate
from gridbalance.report import (
    RunSummary,
    _breakdown_dict,
    format_report,
    read_summary,
    sig,
    summarize,
    summary_json,
    write_dispatch_csv,
    write_summary,
    verify_dispatch_csv,
)

import helpers

SCENARIO = """\
schema_version: 1
id: tiny
traces: {traces}
regions:
  - id: A
    hydro_bio_power_cap: 0.5
    hydro_bio_annual_cap: 0.1
    zones: [{{id: A1, pv_trace: pv_A, wind_trace: wind_A}}]
  - id: B
    zones: [{{id: B1, wind_trace: wind_B}}]
interconnectors:
  - {{id: A-B, from: A, to: B, length_km: 700}}
demand:
  base: {{A: demand_A, B: demand_B}}
optimizer: {{population: 8, generations: 3}}
"""


def write_traces(path, horizon=96, seed=0, columns=("pv_A", "wind_A", "demand_A", "wind_B", "demand_B")):
    rng = np.random.default_rng(seed)
    stamps = helpers.trace_set({"x": np.zeros(horizon)}).timestamps()
    lines = ["timestamp," + ",".join(columns)]
    for t in range(horizon):
        stamp = np.datetime_as_string(stamps[t], unit="m")
        lines.append(stamp + "," + ",".join(f"{rng.uniform(0.1, 0.9):.5f}" for _ in columns))
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture
def workspace(tmp_path):
    write_traces(tmp_path / "traces.csv")
    (tmp_path / "tiny.yaml").write_text(SCENARIO.format(traces="traces.csv"))
    portfolio = Portfolio({"A1": 1.0}, {"A1": 1.0, "B1": 1.5}, {"A": 0.5}, {"A": 3.0}, {"A-B": 1.0})
    (tmp_path / "portfolio.json").write_text(json.dumps(portfolio.to_dict()))
    return tmp_path


def tiny_run(horizon=96):
    s = helpers.scenario(("A", "B"), [("A", "B", 700)], hydro={"A": (0.5, 0.1)})
    traces = helpers.random_traces(np.random.default_rng(0), ("A", "B"), horizon)
    p = Portfolio({"A1": 1.0}, {"A1": 1.0, "B1": 1.5}, {"A": 0.5}, {"A": 3.0}, {"A-B": 1.0})
    return s, p, simulate(s, p, traces)


# --- summaries


def test_sig_rounds_to_six_digits():
    assert sig(76.0000004) == 76.0
    assert sig(1234567.0) == 1234570.0
    assert sig(float("nan")) is None and sig(0.0) == 0.0


def test_summary_round_trip(tmp_path):
    s, p, dr = tiny_run()
    rs = summarize(s, p, dr, seed=7, input_digest="abc")
    write_summary(rs, tmp_path / "s.json")
    back = read_summary(tmp_path / "s.json")
    assert back == rs
    assert summary_json(back) == summary_json(rs)


def test_summary_fixed_key_order_and_version():
    s, p, dr = tiny_run()
    data = json.loads(summary_json(summarize(s, p, dr, seed=1, runtime_s=12.5)))
    keys = list(data)
    assert keys[0] == "summary_version" and keys[1] == "scenario_id"
    assert data["runtime_s"] is None and data["seed"] == 1


def test_summary_breakdown_identity():
    s, p, dr = tiny_run()
    b = summarize(s, p, dr).breakdown
    parts = b["lcog"] + b["lcob_storage"] + b["lcob_transmission"] + b["lcob_spill_loss"]
    assert parts == pytest.approx(b["lcoe"], rel=1e-5)
    assert b["identity"]["components_sum"] == pytest.approx(b["lcoe"], rel=1e-5)


def test_breakdown_format_example():
    bd = CostBreakdown(lcog=48.0, lcob_storage=15.0, lcob_transmission=9.0, lcob_spill_loss=4.0, lcoe=76.0)
    b = _breakdown_dict(bd)
    assert b["lcoe"] == 76.0
    assert b["lcog"] + b["lcob_storage"] + b["lcob_transmission"] + b["lcob_spill_loss"] == 76.0
    assert b["lcob"] == 28.0 and b["identity"]["residual"] == 0.0


def test_empty_portfolio_summary_is_zeros():
    s = helpers.scenario(("A",))
    traces = helpers.flat_traces()
    p = Portfolio.empty(s)
    rs = summarize(s, p, simulate(s, p, traces))
    data = json.loads(summary_json(rs))
    assert data["breakdown"]["lcoe"] == 0.0 and data["storage"]["energy_gwh"] == 0.0
    assert data["reliability"]["unserved_fraction"] == 1.0
    assert RunSummary.from_dict(data) == rs


def test_summary_rejects_unknown_fields():
    s, p, dr = tiny_run()
    data = summarize(s, p, dr).to_dict()
    data["colour"] = "blue"
    with pytest.raises(ValueError):
        RunSummary.from_dict(data)


@settings(max_examples=30, deadline=None)
@given(st.dictionaries(st.sampled_from(["x", "y", "z"]), st.floats(-1e9, 1e9), max_size=3))
def test_summary_round_trip_arbitrary_numbers(costs):
    s, p, dr = tiny_run(48)
    rs = summarize(s, p, dr)
    rs = RunSummary(**{**rs.__dict__, "annual_costs": costs})
    assert RunSummary.from_dict(json.loads(summary_json(rs))) == rs


def test_text_report_mentions_key_numbers():
    s, p, dr = tiny_run()
    rs = summarize(s, p, dr, seed=3)
    text = format_report(rs)
    assert "test" in text and "LCOE" in text
    assert f"{rs.breakdown['lcoe']:.2f}" in text


# --- dispatch CSV


def test_dispatch_window_rows(tmp_path):
    _, _, dr = tiny_run()
    rows = write_dispatch_csv(dr, (10, 58), tmp_path / "d.csv")
    lines = (tmp_path / "d.csv").read_text().splitlines()
    assert rows == 48 and len(lines) == 49
    assert lines[0].startswith("timestamp,A:vre_used")
    worst, n = verify_dispatch_csv(tmp_path / "d.csv")
    assert n == 48 and worst <= 1e-9


def test_dispatch_full_horizon(tmp_path):
    _, _, dr = tiny_run()
    assert write_dispatch_csv(dr, None, tmp_path / "d.csv") == dr.horizon


def test_dispatch_window_out_of_range(tmp_path):
    _, _, dr = tiny_run()
    with pytest.raises(DispatchError):
        write_dispatch_csv(dr, (50, 500), tmp_path / "d.csv")


def test_verifier_detects_tampering(tmp_path):
    _, _, dr = tiny_run()
    path = tmp_path / "d.csv"
    write_dispatch_csv(dr, (0, 4), path)
    lines = path.read_text().splitlines()
    cells = lines[2].split(",")
    cells[1] = str(float(cells[1]) + 0.5)
    lines[2] = ",".join(cells)
    path.write_text("\n".join(lines) + "\n")
    assert verify_dispatch_csv(path)[0] == pytest.approx(0.5)
    assert run_cli(["verify-dispatch", str(path)]) == 2


# --- command line


def test_validate_shipped_preset(capsys):
    assert run_cli(["validate", "supergrid"]) == 0
    assert "supergrid: ok" in capsys.readouterr().out


def test_validate_missing_scenario():
    assert run_cli(["validate", "no-such-scenario"]) == 2


def test_usage_errors():
    assert run_cli([]) == 1
    assert run_cli(["simulate"]) == 1
    assert run_cli(["optimize", "supergrid", "--threads", "0"]) == 1
    assert run_cli(["simulate", "x", "y", "--window", "a:b"]) == 1


def test_simulate_with_mismatched_trace_horizon(workspace, capsys):
    write_traces(workspace / "short.csv", horizon=90, columns=("wind_B", "demand_B"))
    write_traces(workspace / "long.csv", horizon=96, columns=("pv_A", "wind_A", "demand_A"))
    (workspace / "bad.yaml").write_text(SCENARIO.format(traces="[long.csv, short.csv]"))
    code = run_cli(["simulate", str(workspace / "bad.yaml"), str(workspace / "portfolio.json")])
    assert code == 3
    err = capsys.readouterr().err
    assert "wind_B" in err


def test_simulate_writes_summary_and_csv(workspace):
    out, csv = workspace / "summary.json", workspace / "dispatch.csv"
    code = run_cli(["simulate", str(workspace / "tiny.yaml"), str(workspace / "portfolio.json"),
                    "--out", str(out), "--dispatch-csv", str(csv), "--window", "0:48"])
    assert code == 0
    rs = read_summary(out)
    assert rs.scenario_id == "tiny" and len(rs.input_digest) == 64
    assert len(csv.read_text().splitlines()) == 49
    assert run_cli(["verify-dispatch", str(csv)]) == 0
    assert run_cli(["report", str(out), "--out", str(workspace / "r.txt")]) == 0
    assert "tiny" in (workspace / "r.txt").read_text()


def test_simulate_rejects_foreign_portfolio(workspace):
    (workspace / "p.json").write_text(json.dumps({"pv_gw": {"Z9": 1.0}}))
    assert run_cli(["simulate", str(workspace / "tiny.yaml"), str(workspace / "p.json")]) == 2
    (workspace / "p.json").write_text("{not json")
    assert run_cli(["simulate", str(workspace / "tiny.yaml"), str(workspace / "p.json")]) == 2


def test_config_dir_from_environment(workspace, monkeypatch, capsys):
    monkeypatch.setenv(CONFIG_DIR_ENV, str(workspace))
    monkeypatch.chdir(workspace.parent)
    assert run_cli(["validate", "tiny"]) == 0
    assert "tiny: ok" in capsys.readouterr().out


def test_optimize_is_deterministic(workspace):
    outs = []
    for threads in ("1", "2"):
        out = workspace / f"opt{threads}.json"
        assert run_cli(["optimize", str(workspace / "tiny.yaml"), "--seed", "7", "--threads", threads,
                        "--quiet", "--out", str(out)]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    assert json.loads(outs[0])["seed"] == 7


def test_sensitivity_csv(workspace):
    out = workspace / "sens.csv"
    code = run_cli(["sensitivity", str(workspace / "tiny.yaml"), str(workspace / "portfolio.json"),
                    "--parameters", "discount_rate", "pv_capital", "--out", str(out)])
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "parameter,multiplier,lcoe" and len(lines) == 7


def test_report_missing_summary(tmp_path):
    assert run_cli(["report", str(tmp_path / "nope.json")]) == 2
