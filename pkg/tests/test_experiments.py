import math
from dataclasses import replace
from pathlib import Path

import pytest

from csmlowpan import experiments as ex
from csmlowpan.cli import main
from csmlowpan.config import dump_config, load_config, parse_config
from csmlowpan.netsim import ConfigurationError
from csmlowpan.rpl import Mode
from csmlowpan.world import Topology

T_975_9DF = 2.2621571627  # two-sided 95% Student-t quantile, 9 degrees of freedom (standard table)

SHORT = ex.ScenarioConfig(rounds=2, duration=360)


def test_ci_zero_variance():
    assert ex.confidence_interval([5, 5, 5, 5]) == (5, 0)


def test_ci_uses_t_quantile():
    xs = [0.1 * i for i in range(10)]
    mean, hw = ex.confidence_interval(xs)
    sd = math.sqrt(sum((x - mean) ** 2 for x in xs) / 9)
    assert mean == pytest.approx(0.45)
    assert hw == pytest.approx(T_975_9DF * sd / math.sqrt(10), rel=1e-9)


def test_ci_degenerate():
    mean, hw = ex.confidence_interval([3.0])
    assert mean == 3.0 and math.isnan(hw)
    assert ex.confidence_interval([1.0, math.inf]) == (math.inf, math.inf)


def test_round_seeds_and_accounting():
    res = ex.run_scenario(SHORT.with_attack(kind="all_but_last"))
    assert [r.seed for r in res.rounds] == [SHORT.base_seed, SHORT.base_seed + 1]
    for r in res.rounds:
        assert r.accounting_ok()
        assert 0 <= r.pdr <= 1


def test_drop_reasons_are_attributed():
    r = ex.run_round(SHORT.with_attack(kind="frag1_only", jitter=0), 0)
    assert r.delivered == 0
    assert r.drops["buffer_busy"] == r.sends > 0


def test_route_over_conservation_and_payload_integrity():
    cfg = replace(SHORT, mode=Mode.CSM).with_attack(kind="full_packet", timing="after")
    _, world = ex.run_round(cfg, 0, keep_world=True)
    ledger, sender = world.ledger, world.nodes["S"]
    legit = [m for m in ledger.delivered if m[0] == "S"]
    assert legit
    for meta in legit:
        assert ledger.reassembled[("F", meta)] == 1
        assert ledger.reassembled[("R", meta)] == 1
        assert ledger.payloads[meta] == sender.sent_payloads[meta[1]]


def test_occupancy_checked_every_event():
    ex.run_round(SHORT.with_attack(kind="all_but_last"), 0, check=True)


def test_matrix_shape():
    configs = ex.matrix_configs(ex.ScenarioConfig())
    assert len(configs) == 20
    assert len({(c.mode, c.name) for c in configs}) == 20
    none_only = ex.run_matrix(SHORT, kinds=["none"])
    assert [(r.summary.mode, r.summary.scenario) for r in none_only] == [("vanilla", "none"), ("csm", "none")]
    assert all(r.summary.metrics["pdr"][0] >= 0.99 for r in none_only)


def test_report_regenerates_identically(tmp_path):
    results = ex.run_matrix(SHORT, kinds=["none", "frag1_only"], timings=["before"])
    ex.write_results(tmp_path, results)
    report, summary = (tmp_path / "report.md").read_text(), (tmp_path / "summary.csv").read_text()
    ex.regenerate_report(tmp_path)
    assert (tmp_path / "report.md").read_text() == report
    assert (tmp_path / "summary.csv").read_text() == summary
    assert "| frag1_only/before |" in report


def test_rounds_csv_round_trip():
    rounds = ex.run_scenario(SHORT.with_attack(kind="frag1_only")).rounds
    assert ex.parse_rounds_csv(ex.rounds_csv(rounds)) == rounds


def test_invalid_topology_rejected_before_running():
    cut = Topology(links=[("R", "F"), ("F", "A")])
    with pytest.raises(ConfigurationError):
        ex.run_scenario(replace(SHORT, topology=cut))


def test_invariant_checker_flags_problems():
    bad = ex.RoundResult("frag1_only/before", "csm", 0, 1, 0.2, 1.0, 10, 2, {"buffer_busy": 7})
    good = ex.RoundResult("frag1_only/before", "vanilla", 0, 1, 0.9, 1.0, 10, 9, {"buffer_busy": 1})
    results = [ex.ScenarioResult(SHORT, [r], ex.summarize(r.scenario, r.mode, [r])) for r in (bad, good)]
    problems = ex.check_invariants(results)
    assert any("sends != deliveries" in p for p in problems)
    assert any("below vanilla" in p for p in problems)


def test_config_round_trip():
    cfg = replace(SHORT, mode=Mode.CSM, base_seed=9).with_attack(
        kind="all_but_last", timing="after", knowledge="spoof_link_addr", jitter=1.5)
    assert parse_config(dump_config(cfg)) == cfg


@pytest.mark.parametrize("text", [
    "[scenario]\nbogus = 1\n",
    "[nonsense]\n",
    "[attack]\nkind = laser\n",
    "[topology]\nlinks = R-F-S\n",
    "no section header",
])
def test_bad_config(text):
    with pytest.raises(ConfigurationError):
        parse_config(text)


def test_cli_run_and_report(tmp_path, capsys):
    ini = tmp_path / "s.ini"
    ini.write_text("[scenario]\nmode = csm\nrounds = 2\nduration = 300\n[attack]\nkind = frag1_only\n")
    out = tmp_path / "out"
    assert main(["run", "--config", str(ini), "--timing", "after", "--out", str(out), "--check"]) == 0
    for name in ("rounds.csv", "summary.csv", "report.md", "summary.json", "scenario.ini"):
        assert (out / name).exists()
    assert "frag1_only/after" in capsys.readouterr().out
    rounds = (out / "rounds.csv").read_text()
    assert main(["report", "--out", str(out)]) == 0
    assert (out / "rounds.csv").read_text() == rounds
    assert main(["report", "--out", str(tmp_path / "missing")]) == 2


def test_cli_matrix_subset(tmp_path):
    out = tmp_path / "m"
    assert main(["matrix", "--attack", "none", "--rounds", "2", "--duration", "300",
                 "--seed", "4", "--out", str(out)]) == 0
    rows = ex.parse_rounds_csv((out / "rounds.csv").read_text())
    assert {(r.mode, r.seed) for r in rows} == {(m, s) for m in ("vanilla", "csm") for s in (4, 5)}


def test_cli_bad_config(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "nope.ini")]) == 2
    assert "configuration error" in capsys.readouterr().err


def test_example_config_file_loads():
    cfg = load_config(Path(__file__).parent.parent / "configs" / "example.ini")
    assert cfg == ex.ScenarioConfig(mode=Mode.CSM).with_attack(kind="frag1_only")
