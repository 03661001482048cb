"""Command line: ``run`` one scenario, ``matrix`` the full grid, ``report`` from stored rounds."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import experiments as ex
from .adversary import AttackKind, Knowledge, Timing
from .config import dump_config, load_config
from .netsim import ConfigurationError
from .rpl import Mode


def _base_config(args) -> ex.ScenarioConfig:
    cfg = load_config(args.config) if args.config else ex.ScenarioConfig()
    changes = {}
    if args.mode:
        changes["mode"] = Mode(args.mode)
    if args.rounds is not None:
        changes["rounds"] = args.rounds
    if args.seed is not None:
        changes["base_seed"] = args.seed
    if args.duration is not None:
        changes["duration"] = args.duration
    cfg = replace(cfg, **changes)
    attack = {}
    for name in ("attack", "timing", "knowledge", "jitter"):
        value = getattr(args, name, None)
        if value is not None:
            attack["kind" if name == "attack" else name] = value
    return cfg.with_attack(**attack) if attack else cfg


def _finish(args, results) -> int:
    out = Path(args.out)
    ex.write_results(out, results)
    (out / "scenario.ini").write_text(dump_config(results[0].config))
    print((out / "report.md").read_text(), end="")
    if args.check:
        problems = ex.check_invariants(results)
        for p in problems:
            print(f"INVARIANT VIOLATED: {p}", file=sys.stderr)
        return 1 if problems else 0
    return 0


def cmd_run(args) -> int:
    cfg = _base_config(args)
    res = ex.run_scenario(cfg, check=args.check, jobs=args.jobs,
                          trace_dir=Path(args.out) / "traces" if args.traces else None)
    return _finish(args, [res])


def cmd_matrix(args) -> int:
    cfg = _base_config(args)
    select = {}
    if args.mode:
        select["modes"] = [Mode(args.mode)]
    if args.attack:
        select["kinds"] = [AttackKind(args.attack)]
    if args.timing:
        select["timings"] = [Timing(args.timing)]
    results = ex.run_matrix(cfg, check=args.check, jobs=args.jobs,
                            trace_dir=Path(args.out) / "traces" if args.traces else None, **select)
    return _finish(args, results)


def cmd_report(args) -> int:
    out = Path(args.out)
    if not (out / "rounds.csv").exists():
        print(f"no rounds.csv in {out}", file=sys.stderr)
        return 2
    ex.regenerate_report(out)
    print((out / "report.md").read_text(), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="csmlowpan", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def sim_options(p):
        p.add_argument("--config", type=Path, help="scenario INI file")
        p.add_argument("--mode", choices=[m.value for m in Mode])
        p.add_argument("--attack", choices=[k.value for k in AttackKind])
        p.add_argument("--timing", choices=[t.value for t in Timing])
        p.add_argument("--knowledge", choices=[k.value for k in Knowledge])
        p.add_argument("--jitter", type=float)
        p.add_argument("--rounds", type=int)
        p.add_argument("--seed", type=int, help="base seed; round r uses seed + r")
        p.add_argument("--duration", type=float, help="seconds per round")
        p.add_argument("--out", default="results", help="output directory")
        p.add_argument("--check", action="store_true",
                       help="exit nonzero if any acceptance invariant is violated")
        p.add_argument("--jobs", type=int, default=1, help="worker processes")
        p.add_argument("--traces", action="store_true", help="write one trace CSV per round")

    sim_options(sub.add_parser("run", help="run one scenario"))
    sim_options(sub.add_parser("matrix", help="run the mode x scenario grid"))
    rep = sub.add_parser("report", help="recompute summary.csv and report.md from rounds.csv")
    rep.add_argument("--out", default="results")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    handlers = {"run": cmd_run, "matrix": cmd_matrix, "report": cmd_report}
    try:
        return handlers[args.command](args)
    except (ConfigurationError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
