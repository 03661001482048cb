"""Scenario runner: builds worlds, runs seeded rounds, aggregates PDR and energy."""

from __future__ import annotations

import csv
import io
import json
import math
import statistics
from collections import OrderedDict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence

from scipy import stats

from .adversary import AdversaryNode, AttackConfig, AttackKind, Knowledge, Timing, plan_attack
from .frag import fragment_packet
from .netsim import EnergyMeter, energy_per_delivered
from .nodes import AppSender, SensorNode
from .rpl import Mode
from .trust import TrustConfig
from .world import DROP_REASONS, Topology, World

METRICS = ("pdr", "energy_per_delivered")
ATTACK_KINDS = (AttackKind.FULL_PACKET, AttackKind.FRAG1_ONLY, AttackKind.ALL_BUT_LAST)
TIMINGS = (Timing.BEFORE, Timing.SIMULTANEOUS, Timing.AFTER)
MODES = (Mode.UM, Mode.CSM)


@dataclass(frozen=True)
class ScenarioConfig:
    mode: Mode = Mode.UM
    attack: AttackConfig = field(default_factory=AttackConfig)
    topology: Topology = field(default_factory=Topology)
    rounds: int = 10
    duration: float = 1200.0
    data_size: int = 512
    send_period: float = 60.0
    first_send: float = 60.0
    max_frag_payload: int = 102
    reassembly_timeout: float = 20.0
    buffer_capacity: int = 1
    frame_interval: float = 0.01
    dio_period: float = 10.0
    base_seed: int = 1
    trust: TrustConfig = field(default_factory=TrustConfig)
    e_tx: float = 0.001
    e_rx: float = 0.001

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        if self.rounds < 1:
            raise ValueError("rounds must be at least 1")
        if self.duration <= 0 or self.send_period <= 0:
            raise ValueError("duration and send_period must be positive")

    @property
    def name(self) -> str:
        a = self.attack
        if a.kind is AttackKind.NONE:
            return "none"
        parts = [a.kind.value, a.timing.value]
        if a.knowledge is not Knowledge.EXTERNAL:
            parts.append(a.knowledge.value)
        return "/".join(parts)

    def victim_schedule(self) -> list[float]:
        times, t = [], self.first_send
        while t < self.duration:
            times.append(t)
            t += self.send_period
        return times

    def with_attack(self, **changes) -> "ScenarioConfig":
        return replace(self, attack=replace(self.attack, **changes))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mode"] = self.mode.value
        d["attack"] = {k: getattr(v, "value", v) for k, v in d["attack"].items()}
        return d


@dataclass
class RoundResult:
    scenario: str
    mode: str
    round: int
    seed: int
    pdr: float
    energy_per_delivered: float
    sends: int
    delivered: int
    drops: dict[str, int]

    def accounting_ok(self) -> bool:
        return self.sends == self.delivered + sum(self.drops.values())


@dataclass
class Summary:
    scenario: str
    mode: str
    metrics: dict[str, tuple[float, float]]  # metric -> (mean, ci95 half-width)


@dataclass
class ScenarioResult:
    config: ScenarioConfig
    rounds: list[RoundResult]
    summary: Summary


def confidence_interval(samples: Sequence[float], level: float = 0.95) -> tuple[float, float]:
    """Mean and Student-t half-width. Fewer than two samples give a NaN half-width."""
    xs = list(samples)
    if not xs:
        return math.nan, math.nan
    if any(math.isnan(x) for x in xs):
        return math.nan, math.nan
    if any(math.isinf(x) for x in xs):
        return statistics.fmean(xs), math.inf
    mean = statistics.fmean(xs)
    if len(xs) < 2:
        return mean, math.nan
    t = stats.t.ppf(0.5 + level / 2, len(xs) - 1)
    return mean, float(t * statistics.stdev(xs) / math.sqrt(len(xs)))


# -- building and running -------------------------------------------------------

def _effective_topology(cfg: ScenarioConfig) -> Topology:
    topo = cfg.topology
    if cfg.attack.kind is not AttackKind.NONE or topo.adversary is None:
        return topo
    adv = topo.adversary
    return replace(topo,
                   nodes=[n for n in topo.nodes if n != adv],
                   links=[l for l in topo.links if adv not in l],
                   sniff=[s for s in topo.sniff if adv not in s],
                   adversary=None, target=None)


def build_world(cfg: ScenarioConfig, seed: int, check: bool = False) -> World:
    topo = _effective_topology(cfg)
    world = World(topo, seed, EnergyMeter(cfg.e_tx, cfg.e_rx))
    sim = world.sim
    key = sim.rng("psk").randbytes(16)
    common = dict(mode=cfg.mode, trust_config=cfg.trust, buffer_capacity=cfg.buffer_capacity,
                  reassembly_timeout=cfg.reassembly_timeout, max_frag_payload=cfg.max_frag_payload,
                  frame_interval=cfg.frame_interval, dio_period=cfg.dio_period)

    for name in topo.nodes:
        if name == topo.adversary:
            continue
        world.add(SensorNode(world, name, world.node_id(name), key=key,
                             is_root=(name == topo.root), **common))

    victim = world.nodes[topo.sender]
    schedule = cfg.victim_schedule()
    AppSender(victim, schedule, cfg.data_size, cfg.attack.jitter).start()

    if topo.adversary is not None:
        knows_key = cfg.attack.knowledge is Knowledge.INTERNAL
        adv_key = key if knows_key else sim.rng("adversary-key").randbytes(16)
        adv = AdversaryNode(world, topo.adversary, world.node_id(topo.adversary),
                            attack=cfg.attack, target=topo.target, victim=victim,
                            data_size=cfg.data_size, key=adv_key, **common)
        world.add(adv)
        n_frags = max(1, len(fragment_packet(bytes(cfg.data_size), 0, cfg.max_frag_payload)))
        adv.schedule_attack(plan_attack(cfg.attack, schedule, cfg.reassembly_timeout,
                                        sim.rng("attack-plan"), until=cfg.duration,
                                        n_fragments=n_frags))

    world.finish_wiring()
    for node in world.nodes.values():
        node.start()
    if check:
        sim.after_event.append(world.check_occupancy)
    return world


def measure(cfg: ScenarioConfig, world: World, round_index: int, seed: int) -> RoundResult:
    sender = world.topology.sender
    sends, delivered, drops = world.ledger.tally(sender, since=cfg.attack.start)
    _, delivered_all, _ = world.ledger.tally(sender)
    pdr = delivered / sends if sends else math.nan
    energy = energy_per_delivered(world.network.meter, sender, delivered_all)
    return RoundResult(cfg.name, cfg.mode.value, round_index, seed, pdr, energy,
                       sends, delivered, drops)


def run_round(cfg: ScenarioConfig, round_index: int, check: bool = False,
              keep_world: bool = False):
    seed = cfg.base_seed + round_index
    world = build_world(cfg, seed, check=check)
    world.run(cfg.duration)
    result = measure(cfg, world, round_index, seed)
    return (result, world) if keep_world else result


def _round_job(args):
    cfg, r, check, trace_dir = args
    result, world = run_round(cfg, r, check=check, keep_world=True)
    if trace_dir is not None:
        write_trace(world.sim.trace, Path(trace_dir) / cfg.mode.value / cfg.name.replace("/", "-")
                    / f"round_{r:02d}.csv")
    return result


def summarize(scenario: str, mode: str, rounds: Iterable[RoundResult]) -> Summary:
    rounds = list(rounds)
    return Summary(scenario, mode,
                   {m: confidence_interval([getattr(r, m) for r in rounds]) for m in METRICS})


def run_scenario(cfg: ScenarioConfig, check: bool = False, jobs: int = 1,
                 trace_dir: Optional[Path] = None) -> ScenarioResult:
    _effective_topology(cfg).validate()
    jobs_args = [(cfg, r, check, trace_dir) for r in range(cfg.rounds)]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            rounds = list(pool.map(_round_job, jobs_args))
    else:
        rounds = [_round_job(a) for a in jobs_args]
    return ScenarioResult(cfg, rounds, summarize(cfg.name, cfg.mode.value, rounds))


def matrix_configs(base: ScenarioConfig, modes: Sequence[Mode] = MODES,
                   kinds: Sequence[AttackKind] = (AttackKind.NONE,) + ATTACK_KINDS,
                   timings: Sequence[Timing] = TIMINGS) -> list[ScenarioConfig]:
    configs = []
    for mode in modes:
        for kind in kinds:
            if AttackKind(kind) is AttackKind.NONE:
                configs.append(replace(base, mode=mode).with_attack(kind=AttackKind.NONE))
                continue
            for timing in timings:
                configs.append(replace(base, mode=mode).with_attack(kind=kind, timing=timing))
    return configs


def run_matrix(base: ScenarioConfig, check: bool = False, jobs: int = 1,
               trace_dir: Optional[Path] = None, **select) -> list[ScenarioResult]:
    configs = matrix_configs(base, **select)
    for c in configs:
        _effective_topology(c).validate()
    if jobs > 1:
        args = [(c, r, check, trace_dir) for c in configs for r in range(c.rounds)]
        with ProcessPoolExecutor(jobs) as pool:
            flat = list(pool.map(_round_job, args, chunksize=4))
        out, i = [], 0
        for c in configs:
            rounds, i = flat[i:i + c.rounds], i + c.rounds
            out.append(ScenarioResult(c, rounds, summarize(c.name, c.mode.value, rounds)))
        return out
    return [run_scenario(c, check=check, trace_dir=trace_dir) for c in configs]


# -- invariant checks -----------------------------------------------------------

def check_invariants(results: Sequence[ScenarioResult]) -> list[str]:
    problems = []
    for res in results:
        for r in res.rounds:
            if not math.isnan(r.pdr) and not 0.0 <= r.pdr <= 1.0:
                problems.append(f"{r.mode}/{r.scenario} round {r.round}: pdr {r.pdr} out of range")
            if not r.accounting_ok():
                problems.append(f"{r.mode}/{r.scenario} round {r.round}: sends != deliveries + drops")

    means = {(res.summary.mode, res.summary.scenario): res.summary.metrics["pdr"][0] for res in results}
    for (mode, scenario), pdr in means.items():
        if mode != Mode.CSM.value or scenario == "none":
            continue
        vanilla = means.get((Mode.UM.value, scenario))
        if vanilla is not None and pdr < vanilla - 0.01:
            problems.append(f"{scenario}: csm PDR {pdr:.3f} below vanilla {vanilla:.3f}")
    for kind in (AttackKind.FRAG1_ONLY, AttackKind.ALL_BUT_LAST):
        got = [means.get((Mode.UM.value, f"{kind.value}/{t.value}")) for t in TIMINGS]
        if None in got:
            continue
        before, simult, after = got
        if not before <= simult <= after + 0.05:
            problems.append(f"vanilla {kind.value}: timing order violated {got}")
    return problems


# -- files ------------------------------------------------------------------------

ROUND_FIELDS = ["scenario", "mode", "round", "seed", "pdr", "energy_per_delivered",
                "sends", "delivered"] + [f"drop_{r}" for r in DROP_REASONS]
SUMMARY_FIELDS = ["scenario", "mode", "metric", "mean", "ci95_halfwidth"]


def _num(x: float) -> str:
    return repr(float(x))


def rounds_csv(rounds: Iterable[RoundResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ROUND_FIELDS)
    for r in rounds:
        w.writerow([r.scenario, r.mode, r.round, r.seed, _num(r.pdr), _num(r.energy_per_delivered),
                    r.sends, r.delivered] + [r.drops.get(k, 0) for k in DROP_REASONS])
    return buf.getvalue()


def parse_rounds_csv(text: str) -> list[RoundResult]:
    out = []
    for row in csv.DictReader(io.StringIO(text)):
        drops = {k: int(row[f"drop_{k}"]) for k in DROP_REASONS}
        out.append(RoundResult(row["scenario"], row["mode"], int(row["round"]), int(row["seed"]),
                               float(row["pdr"]), float(row["energy_per_delivered"]),
                               int(row["sends"]), int(row["delivered"]), drops))
    return out


def summaries_from_rounds(rounds: Iterable[RoundResult]) -> list[Summary]:
    groups: "OrderedDict[tuple[str, str], list[RoundResult]]" = OrderedDict()
    for r in rounds:
        groups.setdefault((r.scenario, r.mode), []).append(r)
    return [summarize(s, m, rs) for (s, m), rs in groups.items()]


def summary_csv(summaries: Iterable[Summary]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_FIELDS)
    for s in summaries:
        for metric in METRICS:
            mean, hw = s.metrics[metric]
            w.writerow([s.scenario, s.mode, metric, _num(mean), _num(hw)])
    return buf.getvalue()


def _cell(mean: float, hw: float, pct: bool) -> str:
    if math.isinf(mean):
        return "inf"
    if math.isnan(mean):
        return "n/a"
    if pct:
        return f"{100 * mean:.1f} ± {100 * hw:.1f}" if not math.isnan(hw) else f"{100 * mean:.1f}"
    return f"{mean:.3f} ± {hw:.3f}" if not math.isnan(hw) else f"{mean:.3f}"


def report_table(summaries: Iterable[Summary]) -> str:
    """Markdown table: one row per scenario, vanilla and CSM side by side for each metric."""
    by_scenario: "OrderedDict[str, dict[str, Summary]]" = OrderedDict()
    for s in summaries:
        by_scenario.setdefault(s.scenario, {})[s.mode] = s
    modes = [m.value for m in MODES]
    lines = [
        "| scenario | " + " | ".join(f"PDR % ({m})" for m in modes) + " | "
        + " | ".join(f"mJ/packet ({m})" for m in modes) + " |",
        "|---" * (1 + 2 * len(modes)) + "|",
    ]
    for scenario, per_mode in by_scenario.items():
        cells = [scenario]
        for metric, pct in (("pdr", True), ("energy_per_delivered", False)):
            for m in modes:
                s = per_mode.get(m)
                cells.append("-" if s is None else _cell(*s.metrics[metric], pct=pct))
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def write_results(out: Path, results: Sequence[ScenarioResult]) -> None:
    out.mkdir(parents=True, exist_ok=True)
    rounds = [r for res in results for r in res.rounds]
    (out / "rounds.csv").write_text(rounds_csv(rounds))
    write_summary_files(out, summaries_from_rounds(rounds))
    doc = {
        "scenarios": [
            {"scenario": res.config.name, "mode": res.config.mode.value,
             "config": res.config.to_dict(),
             "summary": {m: {"mean": v[0], "ci95_halfwidth": v[1]}
                         for m, v in res.summary.metrics.items()}}
            for res in results
        ]
    }
    (out / "summary.json").write_text(json.dumps(doc, indent=2, default=str) + "\n")


def write_summary_files(out: Path, summaries: list[Summary]) -> None:
    (out / "summary.csv").write_text(summary_csv(summaries))
    (out / "report.md").write_text(report_table(summaries))


def regenerate_report(out: Path) -> list[Summary]:
    rounds = parse_rounds_csv((out / "rounds.csv").read_text())
    summaries = summaries_from_rounds(rounds)
    write_summary_files(out, summaries)
    return summaries


def write_trace(rows, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time_s", "node", "event_kind", "detail", "result"])
        for t, node, kind, detail, result in rows:
            w.writerow([f"{t:.6f}", node, kind, detail, result])
