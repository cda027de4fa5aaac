"""Shipped GridCan fixtures: PDDL-lite domain/problem and novelty scenario files."""

from __future__ import annotations

from pathlib import Path

FIXTURE_DIR = Path(__file__).resolve().parent
DOMAIN_PATH = FIXTURE_DIR / "gridcan-domain.pddl"
PROBLEM_PATH = FIXTURE_DIR / "gridcan-problem.pddl"
SCENARIO_DIR = FIXTURE_DIR / "scenarios"


def load_gridcan(domain_path: str | Path = DOMAIN_PATH, problem_path: str | Path = PROBLEM_PATH):
    from ..symbolic import parse_domain, parse_problem

    domain = parse_domain(Path(domain_path).read_text(encoding="utf-8"))
    task = parse_problem(Path(problem_path).read_text(encoding="utf-8"), domain)
    return domain, task


def scenario_path(name: str) -> Path:
    return SCENARIO_DIR / f"{name}.json"


def load_scenario(name: str):
    from ..world import NoveltyScenario, UnknownScenario

    path = scenario_path(name)
    if not path.exists():
        raise UnknownScenario(name)
    return NoveltyScenario.load(path)
