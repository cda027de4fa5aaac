"""Independent reference implementations: acceptance checks and tests compare the real code against these."""

from __future__ import annotations

import itertools
from collections import deque

import numpy as np

from .symbolic import Atom, apply, applicable


def bfs_plan_length(initial, goal, ops):
    """Length of a shortest plan by plain breadth-first search, or None."""
    initial, goal = frozenset(initial), frozenset(goal)
    if goal <= initial:
        return 0
    seen = {initial}
    frontier = deque([(initial, 0)])
    while frontier:
        state, depth = frontier.popleft()
        for op in ops:
            if op.preconditions <= state:
                nxt = (state - op.delete_effects) | op.add_effects
                if nxt in seen:
                    continue
                if goal <= nxt:
                    return depth + 1
                seen.add(nxt)
                frontier.append((nxt, depth + 1))
    return None


def brute_force_bindings(entities_by_type, parameter_types):
    """Every assignment of typed entities to parameters, in plain nested-loop order."""
    pools = [sorted(entities_by_type.get(t, [])) for t in parameter_types]
    return [tuple(c) for c in itertools.product(*pools)]


def finite_difference(f, params, h=1e-5):
    """Central-difference gradient of scalar ``f`` w.r.t. each array in ``params`` (modified in place)."""
    grads = []
    for p in params:
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            old = p[idx]
            p[idx] = old + h
            fp = f()
            p[idx] = old - h
            fm = f()
            p[idx] = old
            g[idx] = (fp - fm) / (2 * h)
        grads.append(g)
    return grads


def value_iteration(n_states, n_actions, transition, reward, terminal, gamma, tol=1e-12):
    """Q* for a deterministic MDP given ``transition[s][a]`` and ``reward[s][a]``."""
    q = np.zeros((n_states, n_actions))
    while True:
        v = q.max(axis=1)
        new = np.zeros_like(q)
        for s in range(n_states):
            for a in range(n_actions):
                s2 = transition[s][a]
                new[s, a] = reward[s][a] + (0.0 if terminal[s][a] else gamma * v[s2])
        if np.abs(new - q).max() < tol:
            return new
        q = new


REGIONS = ("Q0", "Q1", "Q2", "Q3")
STATIC = frozenset({Atom("container-at", ("bin", "Q3")), Atom("switch-at", ("door-switch", "Q1"))})


def random_gridcan_state(rng):
    """A physically consistent GridCan symbolic state with independent door and light flags."""
    atoms = set(STATIC)
    atoms.add(Atom("at-agent", (REGIONS[rng.integers(4)],)))
    where = rng.integers(3)
    if where == 0:
        atoms.add(Atom("holding", ("can",)))
    elif where == 1:
        atoms.add(Atom("at", ("can", REGIONS[rng.integers(4)])))
    else:
        atoms.add(Atom("in", ("can", "bin")))
    if rng.random() < 0.5:
        atoms.add(Atom("door-open", ()))
    if rng.random() < 0.5:
        atoms.add(Atom("light-on", ()))
    return frozenset(atoms)


def random_executions(op_name, ground_ops, n, rng, max_tries=100000):
    """``n`` (pre, post, binding) triples from applying ``op_name`` with injective bindings in random states."""
    candidates = [g for g in ground_ops if g.name == op_name and len(set(g.entities)) == len(g.entities)]
    out = []
    for _ in range(max_tries):
        if len(out) == n:
            break
        state = random_gridcan_state(rng)
        usable = [g for g in candidates if applicable(state, g)]
        if not usable:
            continue
        g = usable[rng.integers(len(usable))]
        post = apply(state, g)
        if post != state:
            out.append((state, post, dict(g.binding)))
    return out
