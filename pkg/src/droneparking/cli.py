"""Command-line interface.

Every subcommand writes deterministic files into ``--out``; timings go to
stderr through logging only.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import ScenarioError
from .harness import (
    BASELINES,
    ScenarioSpec,
    evaluate_batch,
    prepare_incident,
    random_scenario,
    run_strategy,
)
from .serialize import formation_to_text, write_occupancy

log = logging.getLogger("droneparking")

EXIT_OK = 0
EXIT_SPEC = 2


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def _load_spec(args) -> ScenarioSpec:
    if args.spec:
        spec = ScenarioSpec.load(args.spec)
        if args.seed is not None:
            spec = spec.with_seed(args.seed)
        return spec
    return random_scenario(args.seed if args.seed is not None else 0)


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_plan(args) -> int:
    spec = _load_spec(args)
    rep = run_strategy(prepare_incident(spec), "planner")
    out = _out(args)
    _dump(out / "report.json", rep.to_dict())
    text = formation_to_text(rep.formation) if rep.formation else "formation plans=0\n"
    (out / "plans.txt").write_text(text)
    print(f"{len(rep.evacuees)} evacuees, {len(rep.capacity_failures)} capacity failures -> {out}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    spec = _load_spec(args)
    rep = run_strategy(prepare_incident(spec), "planner")
    out = _out(args)
    _dump(out / "report.json", rep.to_dict())
    if rep.recovery_plan is not None:
        (out / "recovery_plans.txt").write_text(formation_to_text(rep.recovery_plan))
    m = rep.metrics
    print(f"realized hits {m.realized_hits}, expected hits {m.expected_hits:.3f}, "
          f"fill ratio {m.fill_ratio:.3f} -> {out}")
    return EXIT_OK


def cmd_baseline(args) -> int:
    spec = _load_spec(args)
    rep = run_strategy(prepare_incident(spec), args.strategy)
    out = _out(args)
    _dump(out / f"report_{args.strategy}.json", rep.to_dict())
    print(f"{args.strategy}: realized hits {rep.metrics.realized_hits} -> {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    seed = args.seed if args.seed is not None else 0
    if args.spec:
        spec = _load_spec(args)
        res = evaluate_batch([spec] * args.count, workers=args.threads)
    else:
        res = evaluate_batch(seed=seed, count=args.count, workers=args.threads)
    out = _out(args)
    (out / "batch.csv").write_text(res.to_csv())
    _dump(out / "summary.json", res.to_dict())
    for s, row in res.summary.items():
        print(f"{s}: mean realized hits {row['realized_hits_mean']:.3f}")
    return EXIT_OK


def cmd_export_occupancy(args) -> int:
    spec = _load_spec(args)
    inc = prepare_incident(spec)
    out = _out(args)
    with open(out / "occupancy.csv", "w") as fh:
        n = write_occupancy(inc.combined, fh)
    zones = {
        "t0": inc.t0,
        "t_end": inc.t_end,
        "parking_band": list(inc.band),
        "parking_cells": [list(c) for c in sorted(inc.zones.parking_space)] if inc.zones else [],
        "evacuees": inc.evacuees,
        "injected": inc.failing,
    }
    _dump(out / "zones.json", zones)
    print(f"{n} tiles -> {out / 'occupancy.csv'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--spec", help="scenario JSON (default: random scenario from --seed)")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--seed", type=int, default=None, help="master seed override")
    common.add_argument("--threads", type=int, default=1, help="worker processes")
    common.add_argument("-v", "--verbose", action="store_true", help="log timings to stderr")

    p = argparse.ArgumentParser(prog="droneparking",
                                description="Drone light-show evacuation and recovery planner")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("plan", parents=[common], help="plan evacuation; write plans and report"
                   ).set_defaults(func=cmd_plan)
    sub.add_parser("simulate", parents=[common], help="full incident with recovery"
                   ).set_defaults(func=cmd_simulate)
    b = sub.add_parser("baseline", parents=[common], help="run a baseline strategy")
    b.add_argument("--strategy", required=True, choices=BASELINES)
    b.set_defaults(func=cmd_baseline)
    e = sub.add_parser("eval", parents=[common], help="paired batch evaluation")
    e.add_argument("--count", type=int, required=True)
    e.set_defaults(func=cmd_eval)
    sub.add_parser("export-occupancy", parents=[common], help="write the occupancy tile table"
                   ).set_defaults(func=cmd_export_occupancy)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(stream=sys.stderr, level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_SPEC
    if getattr(args, "count", 1) < 1:
        print("error: --count must be >= 1", file=sys.stderr)
        return EXIT_SPEC
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"spec error: {exc}", file=sys.stderr)
        return EXIT_SPEC


if __name__ == "__main__":
    sys.exit(main())
