import csv
import math

import pytest
from hypothesis import given, strategies as st

from mipsim.harness import (
    ALL_STRATEGIES,
    ConfigError,
    ScenarioConfig,
    builtin_scenario,
    emit_logs,
    emit_plotdata,
    improvement,
    load_scenario,
    parse_strategies,
    resolve_seed,
    run_scenario,
)
from mipsim.topology import Strategy, parse_address


@pytest.fixture(scope="module")
def report_b():
    return run_scenario(builtin_scenario("B"))


def test_improvement_examples():
    assert improvement(0.808378, 0.406199) == pytest.approx(49.75135395, abs=1e-6)
    assert improvement(0.606031, 0.406199) == pytest.approx(32.97389077, abs=1e-6)
    assert improvement(0.4, 0.4) == 0
    with pytest.raises(ArithmeticError):
        improvement(0.0, 0.1)


@given(st.floats(0.001, 10), st.floats(0, 10))
def test_improvement_sign(a, b):
    v = improvement(a, b)
    assert math.copysign(1, v) == math.copysign(1, a - b) or v == 0


def test_emit_plotdata_files(report_b, tmp_path):
    files = emit_plotdata(report_b, tmp_path)
    assert sorted(f.name for f in files) == sorted(
        ["delay_B_original.csv", "delay_B_onelevel.csv", "delay_B_twolevel.csv",
         "loss_B.csv", "registration_B.csv"])
    rows = list(csv.DictReader((tmp_path / "registration_B.csv").open()))
    assert len(rows) == 1
    assert rows[0]["via_fa"] == "1.5.0"
    assert list(rows[0])[:5] == ["via_fa", "original", "onelevel", "twolevel", "improvement_vs_original"]
    assert all(len(rows[0][k].split(".")[1]) == 6 for k in ("original", "onelevel", "twolevel"))
    header = next(csv.reader((tmp_path / "loss_B.csv").open()))
    assert header == ["time_s", "original", "onelevel", "twolevel"]
    delay = list(csv.reader((tmp_path / "delay_B_twolevel.csv").open()))
    assert delay[0] == ["send_time_s", "delay_s", "seq"]


def test_outputs_are_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    emit_plotdata(run_scenario(builtin_scenario("C")), a)
    emit_plotdata(run_scenario(builtin_scenario("C")), b)
    for f in a.iterdir():
        assert f.read_bytes() == (b / f.name).read_bytes()


def test_requested_strategies_only_in_order(tmp_path):
    cfg = builtin_scenario("D")
    cfg.strategies = (Strategy.TWO_LEVEL_UP, Strategy.ORIGINAL)
    rep = run_scenario(cfg)
    emit_plotdata(rep, tmp_path)
    header = next(csv.reader((tmp_path / "loss_D.csv").open()))
    assert header == ["time_s", "twolevel", "original"]
    assert not (tmp_path / "delay_D_onelevel.csv").exists()


def test_empty_strategies_rejected():
    cfg = builtin_scenario("A")
    cfg.strategies = ()
    with pytest.raises(ConfigError):
        run_scenario(cfg)


def test_metrics_for_scenario_b(report_b):
    reg = [report_b[s].registration_time_s for s in ALL_STRATEGIES]
    assert reg[2] < reg[1] < reg[0]
    assert [report_b[s].data_path_hops for s in ALL_STRATEGIES] == [7, 5, 3]
    assert [report_b[s].registration_rtt_hops for s in ALL_STRATEGIES] == [8, 6, 4]
    for s in ALL_STRATEGIES:
        assert report_b[s].conserved
        assert report_b[s].final_attachment == parse_address("1.5.0")
    assert "improvement_vs_original" in report_b.improvements
    assert "twolevel" in report_b.summary()


def test_logs_written(report_b, tmp_path):
    files = emit_logs(report_b, tmp_path)
    assert len(files) == 6
    first = (tmp_path / "trace_B_original.csv").read_text().splitlines()[0]
    assert first == "time_s,node,event_kind,seq,pkt_kind,wire_bytes,detail"


def test_load_scenario(tmp_path):
    f = tmp_path / "s.yaml"
    f.write_text("base: B\nstrategy: [twolevel, original]\nhandoffs: [[12.0, 0.1.0]]\n"
                 "registration_terminates_at: home_agent\nlifetime: 90\nparams: {rate: 2}\n")
    cfg = load_scenario(f)
    assert cfg.id == "B"
    assert cfg.strategies == (Strategy.TWO_LEVEL_UP, Strategy.ORIGINAL)
    assert cfg.handoffs == [(12.0, parse_address("0.1.0"))]
    assert cfg.params.rate == 2 and cfg.params.lifetime == 90
    assert cfg.registration_terminates_at == "home_agent"
    f.write_text("colour: blue\n")
    with pytest.raises(ConfigError, match="colour"):
        load_scenario(f)
    f.write_text("strategy: sideways\n")
    with pytest.raises(ConfigError):
        load_scenario(f)


def test_unknown_builtin():
    with pytest.raises(ConfigError):
        builtin_scenario("Z")
    assert parse_strategies("all") == ALL_STRATEGIES


def test_seed_from_environment(monkeypatch):
    cfg = ScenarioConfig(seed=3)
    monkeypatch.setenv("MIPSIM_SEED", "42")
    assert resolve_seed(cfg) == 42
    cfg.seed_fixed = True
    assert resolve_seed(cfg) == 3
    cfg.seed_fixed = False
    monkeypatch.setenv("MIPSIM_SEED", "abc")
    with pytest.raises(ConfigError):
        resolve_seed(cfg)
