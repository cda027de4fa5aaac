"""Command-line entry point: ``nsadapt {run,eval,aggregate,plot,plan,induce,check}``.

Exit codes: 0 success (a run that does not converge still succeeds),
1 configuration or fixture error, 2 internal invariant violation or a
failed acceptance check.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import fixtures
from .symbolic import ParseError, TypingError, UnknownEntity, DuplicateName

EXIT_OK, EXIT_CONFIG, EXIT_INTERNAL = 0, 1, 2


def _config(args):
    from .harness import ExperimentConfig

    path = args.config or fixtures.FIXTURE_DIR / "default-config.json"
    cfg = ExperimentConfig.load(path)
    overrides = {}
    if getattr(args, "scenario", None):
        overrides["scenario"] = None if args.scenario == "none" else args.scenario
    if getattr(args, "output", None):
        overrides["output_dir"] = args.output
    if getattr(args, "max_steps", None) is not None:
        overrides["max_adaptation_steps"] = args.max_steps
    if overrides:
        cfg = ExperimentConfig.from_json({**cfg.to_json(), **overrides})
    return cfg


def cmd_run(args) -> int:
    from .harness import run_adaptation

    cfg = _config(args)
    seeds = args.seed if args.seed else cfg.seeds
    for seed in seeds:
        summary = run_adaptation(cfg, seed)
        print(json.dumps(summary.to_json(), sort_keys=True))
    return EXIT_OK


def cmd_eval(args) -> int:
    from .executors import scripted_library
    from .harness import Planner, evaluate, load_problem
    from .world import GridCan, GridCanDetector

    cfg = _config(args)
    full, task = load_problem(cfg)
    domain = full.with_operators([o for o in full.operators if o.name not in set(cfg.withheld_operators)])
    env = GridCan()
    if cfg.scenario:
        env.inject_novelty(fixtures.load_scenario(cfg.scenario))
    library = scripted_library(domain)
    if args.empty_library:
        from .executors import ExecutorLibrary
        library = ExecutorLibrary()
    rate = evaluate(env, GridCanDetector(), domain, Planner(task.goal), library, args.episodes, args.seed or 0)
    print(json.dumps({"scenario": cfg.scenario, "episodes": args.episodes, "success_rate": rate}))
    return EXIT_OK


def cmd_aggregate(args) -> int:
    from .harness import aggregate, load_summaries

    summaries = load_summaries(args.dir)
    if not summaries:
        print(f"no summary.json files under {args.dir}", file=sys.stderr)
        return EXIT_CONFIG
    groups: dict = {}
    for s in summaries:
        groups.setdefault(s.scenario or "baseline", []).append(s)
    report = {name: aggregate(group) for name, group in sorted(groups.items())}
    text = json.dumps(report, indent=2, sort_keys=True)
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n")
    return EXIT_OK


def cmd_plot(args) -> int:
    from .plotting import curve_svg

    path = Path(args.csv)
    if not path.exists():
        print(f"missing {path}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out) if args.out else path.with_suffix(".svg")
    out.write_text(curve_svg(path))
    print(str(out))
    return EXIT_OK


def cmd_plan(args) -> int:
    from .planner import NoPlanFound, SearchConfig, plan

    domain, task = fixtures.load_gridcan(args.domain or fixtures.DOMAIN_PATH, args.problem or fixtures.PROBLEM_PATH)
    from .symbolic import ground_operators

    try:
        p = plan(task, ground_operators(domain), SearchConfig(args.mode, args.max_expansions))
    except NoPlanFound:
        print(json.dumps({"plan": None}))
        return EXIT_OK
    print(json.dumps({"plan": [str(op) for op in p.steps], "steps": p.to_json()}))
    return EXIT_OK


def cmd_induce(args) -> int:
    from .imagination import TransitionLog, export_operators, imagine_operators, induce_operator

    domain, _ = fixtures.load_gridcan(args.domain or fixtures.DOMAIN_PATH, fixtures.PROBLEM_PATH)
    if not Path(args.log).exists():
        print(f"missing {args.log}", file=sys.stderr)
        return EXIT_CONFIG
    log = TransitionLog.load(args.log)
    ids = [args.executor] if args.executor else log.executor_ids()
    ops = []
    for ex in ids:
        induced = induce_operator(log, ex, domain)
        ops.extend(imagine_operators(domain, [induced]) if args.imagine else [induced])
    sys.stdout.write(export_operators(ops))
    return EXIT_OK


def cmd_check(args) -> int:
    from .acceptance import CHECKS, run_check

    names = list(CHECKS) + ["determinism"] if args.name == "all" else [args.name]
    out = Path(args.out) if args.out else None
    ok = True
    for name in names:
        kwargs = {}
        if args.seeds is not None and name in ("her", "curiosity", "end-to-end"):
            kwargs["seeds"] = range(args.seeds)
        if name == "determinism" and args.only:
            kwargs["names"] = args.only.split(",")
        result = run_check(name, out, **kwargs)
        print(result.line(), flush=True)
        ok &= result.passed
    return EXIT_OK if ok else EXIT_INTERNAL


def build_parser() -> argparse.ArgumentParser:
    from .acceptance import CHECKS
    from .planner import MODES

    ap = argparse.ArgumentParser(prog="nsadapt", description="Plan, execute, detect novelty and adapt on GridCan.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run the adaptation loop")
    p.add_argument("--config")
    p.add_argument("--seed", type=int, action="append")
    p.add_argument("--scenario")
    p.add_argument("--output")
    p.add_argument("--max-steps", type=int)
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("eval", help="evaluate the scripted pipeline on a scenario")
    p.add_argument("--config")
    p.add_argument("--scenario")
    p.add_argument("--episodes", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--empty-library", action="store_true")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("aggregate", help="aggregate run summaries under a directory")
    p.add_argument("--dir", required=True)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_aggregate)

    p = sub.add_parser("plot", help="render a metrics or learning-curve CSV as SVG")
    p.add_argument("--csv", required=True)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_plot)

    p = sub.add_parser("plan", help="plan on a PDDL-lite domain/problem pair")
    p.add_argument("--domain")
    p.add_argument("--problem")
    p.add_argument("--mode", choices=MODES, default="uniform-cost")
    p.add_argument("--max-expansions", type=int, default=100_000)
    p.set_defaults(fn=cmd_plan)

    p = sub.add_parser("induce", help="induce operators from a transition log")
    p.add_argument("--log", required=True)
    p.add_argument("--executor")
    p.add_argument("--domain")
    p.add_argument("--imagine", action="store_true")
    p.set_defaults(fn=cmd_induce)

    p = sub.add_parser("check", help="run acceptance checks")
    p.add_argument("name", choices=list(CHECKS) + ["determinism", "all"])
    p.add_argument("--out")
    p.add_argument("--seeds", type=int, help="number of seeds for the seeded experiment checks")
    p.add_argument("--only", help="comma-separated checks for determinism")
    p.set_defaults(fn=cmd_check)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    from .harness import ConfigInvalid, FixtureMissing
    from .world import UnknownScenario

    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.fn(args)
    except (ConfigInvalid, FixtureMissing, UnknownScenario, ParseError, TypingError, UnknownEntity,
            DuplicateName, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # invariant violations surface as exit code 2
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
