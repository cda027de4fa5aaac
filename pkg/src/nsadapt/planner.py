"""Forward state-space search over symbolic states."""

from __future__ import annotations

import heapq
import itertools
import json
from dataclasses import dataclass
from typing import AbstractSet, Iterable, Sequence

from .symbolic import Atom, GroundOperator, PlanningTask, apply, applicable, entails

MODES = ("uniform-cost", "astar-goalcount", "greedy-goalcount")


class NoPlanFound(Exception):
    pass


class BudgetExhausted(Exception):
    pass


@dataclass(frozen=True)
class SearchConfig:
    mode: str = "uniform-cost"
    max_expansions: int = 100_000

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown search mode {self.mode!r}")
        if self.max_expansions <= 0:
            raise ValueError("max_expansions must be positive")


@dataclass(frozen=True)
class Plan:
    steps: tuple[GroundOperator, ...]
    expected_states: tuple[frozenset, ...]

    def __len__(self) -> int:
        return len(self.steps)

    def to_json(self) -> list[dict]:
        return [op.to_json() for op in self.steps]

    def dumps(self) -> str:
        return json.dumps(self.to_json())


def goal_count_heuristic(state: AbstractSet[Atom], goal: Iterable[Atom]) -> int:
    return sum(1 for g in goal if g not in state)


def plan(task: PlanningTask, ops: Sequence[GroundOperator], config: SearchConfig = SearchConfig()) -> Plan:
    """Best-first search; FIFO among equal priorities.

    Raises NoPlanFound when the reachable space is exhausted and
    BudgetExhausted when ``config.max_expansions`` states were expanded.
    """
    goal = task.goal
    start = task.initial

    def priority(g: int, state: frozenset) -> int:
        if config.mode == "uniform-cost":
            return g
        h = goal_count_heuristic(state, goal)
        return g + h if config.mode == "astar-goalcount" else h

    tie = itertools.count()
    frontier = [(priority(0, start), next(tie), 0, start)]
    parents: dict[frozenset, tuple[frozenset, GroundOperator] | None] = {start: None}
    best_g = {start: 0}
    closed: set[frozenset] = set()
    expansions = 0
    while frontier:
        _, _, g, state = heapq.heappop(frontier)
        if state in closed:
            continue
        if entails(state, goal):
            return _extract(parents, state)
        if expansions >= config.max_expansions:
            raise BudgetExhausted(f"expanded {expansions} states")
        closed.add(state)
        expansions += 1
        for op in ops:
            if not op.preconditions <= state:
                continue
            child = (state - op.delete_effects) | op.add_effects
            if child in closed:
                continue
            if child not in best_g or g + 1 < best_g[child]:
                best_g[child] = g + 1
                parents[child] = (state, op)
                heapq.heappush(frontier, (priority(g + 1, child), next(tie), g + 1, child))
    raise NoPlanFound("reachable state space exhausted")


def _extract(parents, state) -> Plan:
    steps: list[GroundOperator] = []
    states = [state]
    while parents[state] is not None:
        prev, op = parents[state]
        steps.append(op)
        states.append(prev)
        state = prev
    return Plan(tuple(reversed(steps)), tuple(reversed(states)))


def validate(p: Plan, task: PlanningTask) -> bool:
    if len(p.expected_states) != len(p.steps) + 1:
        return False
    state = task.initial
    if p.expected_states[0] != state:
        return False
    known = set(task.domain.operators)
    for op, expected in zip(p.steps, p.expected_states[1:]):
        if op.schema not in known or not applicable(state, op):
            return False
        state = apply(state, op)
        if state != expected:
            return False
    return entails(state, task.goal)


def plan_from_steps(task: PlanningTask, steps: Sequence[GroundOperator]) -> Plan:
    """Builds a Plan by progressing ``steps`` from the task's initial state, without checking."""
    states = [task.initial]
    for op in steps:
        states.append((states[-1] - op.delete_effects) | op.add_effects)
    return Plan(tuple(steps), tuple(states))
