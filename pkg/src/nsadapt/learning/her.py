"""Hindsight relabeling of goal-conditioned episodes with symbolically achieved goals."""

from __future__ import annotations

from dataclasses import replace
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from ..symbolic import entails
from .qlearning import Transition

STRATEGIES = ("final", "future-k")


def achieved_goal(state: frozenset, predicates: Iterable[str]) -> frozenset:
    """The part of ``state`` that lies in the goal space spanned by ``predicates``."""
    preds = set(predicates)
    return frozenset(a for a in state if a.predicate in preds)


def her_relabel(episode: Sequence[Transition], detector: Callable, strategy: str = "final", k: int = 4,
                goal_predicates: Optional[Iterable[str]] = None,
                rng: Optional[np.random.Generator] = None) -> list[Transition]:
    """Returns the original transitions followed by relabeled copies.

    Relabeled rewards are the entailment indicator of the new goal in the
    detected successor state; ``done`` is set exactly when that reward is 1.
    Empty achieved goals are skipped. Goal-space predicates default to those
    of the episode's own goal.
    """
    if not episode:
        raise ValueError("episode must be non-empty")
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown relabeling strategy {strategy!r}")
    out = list(episode)
    if strategy == "future-k" and k <= 0:
        return out
    if goal_predicates is None:
        goal_predicates = {a.predicate for a in episode[0].goal}
    preds = set(goal_predicates)
    states = [detector(t.next_obs) for t in episode]
    achieved = [achieved_goal(s, preds) for s in states]

    def relabel(i: int, goal: frozenset) -> Transition:
        r = 1.0 if entails(states[i], goal) else 0.0
        return replace(episode[i], reward=r, done=r == 1.0, goal=goal)

    if strategy == "final":
        goal = achieved[-1]
        if goal:
            out.extend(relabel(i, goal) for i in range(len(episode)))
        return out

    rng = np.random.default_rng(0) if rng is None else rng
    n = len(episode)
    for i in range(n):
        for j in rng.integers(i, n, size=k):
            goal = achieved[int(j)]
            if goal:
                out.append(relabel(i, goal))
    return out
