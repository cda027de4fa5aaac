"""Seeded random typed STRIPS domains and tasks for property checks."""

from __future__ import annotations

from collections import deque
from typing import Optional

import numpy as np

from .symbolic import (
    Atom,
    Domain,
    LiftedOperator,
    PlanningTask,
    PredicateSchema,
    apply,
    applicable,
    bindings,
    ground_operators,
)


def random_domain(rng: np.random.Generator, name: str = "rand", max_types: int = 2, max_entities: int = 3,
                  max_predicates: int = 4, max_operators: int = 4, max_arity: int = 2) -> Domain:
    n_types = int(rng.integers(1, max_types + 1))
    types = tuple(f"t{i}" for i in range(n_types))
    entities = []
    for i, t in enumerate(types):
        for j in range(int(rng.integers(1, max_entities + 1))):
            entities.append((f"e{i}{chr(ord('a') + j)}", t))
    preds = []
    for i in range(int(rng.integers(1, max_predicates + 1))):
        arity = int(rng.integers(0, max_arity + 1))
        preds.append(PredicateSchema(f"p{i}", tuple(types[int(rng.integers(n_types))] for _ in range(arity))))
    ops = []
    for k in range(int(rng.integers(1, max_operators + 1))):
        params = tuple((f"?v{i}", types[int(rng.integers(n_types))]) for i in range(int(rng.integers(0, 3))))
        for _ in range(20):
            op = _random_operator(rng, f"op{k}", params, preds, dict(entities))
            if op is not None:
                ops.append(op)
                break
    return Domain(name, types, tuple(entities), tuple(preds), tuple(ops))


def _random_atom(rng, pred: PredicateSchema, params, entity_types) -> Optional[Atom]:
    args = []
    for t in pred.parameter_types:
        pool = [v for v, vt in params if vt == t] + [e for e, et in entity_types.items() if et == t]
        if not pool:
            return None
        args.append(pool[int(rng.integers(len(pool)))])
    return Atom(pred.name, tuple(args))


def _random_operator(rng, name, params, preds, entity_types) -> Optional[LiftedOperator]:
    def atoms(n):
        out = set()
        for _ in range(n):
            a = _random_atom(rng, preds[int(rng.integers(len(preds)))], params, entity_types)
            if a is not None:
                out.add(a)
        return frozenset(out)

    pre = atoms(int(rng.integers(0, 3)))
    add = atoms(int(rng.integers(1, 3)))
    delete = atoms(int(rng.integers(0, 3))) - add
    if not add:
        return None
    return LiftedOperator(name, params, pre, add, delete)


def random_state(rng: np.random.Generator, domain: Domain, density: float = 0.3) -> frozenset:
    atoms = set()
    for p in domain.predicates:
        for b in bindings(domain, [(f"?x{i}", t) for i, t in enumerate(p.parameter_types)]):
            if rng.random() < density:
                atoms.add(Atom(p.name, tuple(e for _, e in b)))
    return frozenset(atoms)


def reachable_states(initial: frozenset, ops, limit: int) -> Optional[list[frozenset]]:
    """All states reachable from ``initial`` in BFS order, or None if there are more than ``limit``."""
    seen = {initial}
    order = [initial]
    frontier = deque([initial])
    while frontier:
        s = frontier.popleft()
        for g in ops:
            if applicable(s, g):
                n = apply(s, g)
                if n not in seen:
                    seen.add(n)
                    order.append(n)
                    if len(order) > limit:
                        return None
                    frontier.append(n)
    return order


def random_task(rng: np.random.Generator, name: str = "rand", max_states: int = 10_000,
                max_tries: int = 1000) -> PlanningTask:
    """A solvable task whose goal is drawn from a late (deep) reachable state."""
    for _ in range(max_tries):
        domain = random_domain(rng, f"{name}-d")
        ops = ground_operators(domain)
        init = random_state(rng, domain)
        states = reachable_states(init, ops, max_states)
        if states is None or len(states) < 2:
            continue
        deep = max(1, int(0.8 * len(states)))  # favour distant targets for longer plans
        target = states[int(rng.integers(deep, len(states)))] if deep < len(states) else states[-1]
        missing = sorted(target - init)
        if not missing:
            continue
        k = min(4, len(missing))
        picks = rng.choice(len(missing), size=k, replace=False)
        kept = sorted(target & init)
        extra = [kept[int(i)] for i in rng.choice(len(kept), size=min(1, len(kept)), replace=False)] if kept else []
        goal = frozenset(missing[int(i)] for i in picks) | frozenset(extra)
        return PlanningTask(f"{name}-p", domain, init, goal)
    raise RuntimeError("could not generate a bounded solvable task")
