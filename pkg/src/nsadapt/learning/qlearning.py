"""Tabular goal-conditioned Q-learning and the policy artifact format.

Artifact layout (all little-endian)::

    magic    4 bytes  b"NSAQ"
    version  uint32   1
    n_act    uint32   number of actions (or options)
    n_rows   uint32
    rows, sorted by (observation key, goal key):
        obs_len  uint32, then obs_len int64 values
        goal_len uint32, then goal_len bytes of UTF-8 goal key
        n_act float64 action values
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Optional

import numpy as np

from ..symbolic import state_key

MAGIC = b"NSAQ"
VERSION = 1


def goal_key(goal: Iterable) -> str:
    return state_key(goal)


@dataclass(frozen=True)
class Transition:
    obs: object
    action: int
    reward: float
    next_obs: object
    done: bool
    goal: frozenset = frozenset()
    duration: int = 1  # primitive steps covered (options span several)


class GoalConditionedQ:
    """Action values keyed by (discretized observation, canonical goal key)."""

    def __init__(self, n_actions: int, key_fn: Optional[Callable] = None, initial_value: float = 0.0):
        self.n_actions = n_actions
        self.key_fn = key_fn if key_fn is not None else _default_key
        self.initial_value = float(initial_value)
        self.table: dict[tuple, np.ndarray] = {}

    def key(self, obs, goal) -> tuple:
        gk = goal if isinstance(goal, str) else goal_key(goal)
        return (tuple(self.key_fn(obs)), gk)

    def values(self, obs, goal) -> np.ndarray:
        row = self.table.get(self.key(obs, goal))
        return row if row is not None else np.full(self.n_actions, self.initial_value)

    def row(self, obs, goal) -> np.ndarray:
        k = self.key(obs, goal)
        if k not in self.table:
            self.table[k] = np.full(self.n_actions, self.initial_value)
        return self.table[k]

    def greedy(self, obs, goal, mask: Optional[np.ndarray] = None) -> int:
        v = self.values(obs, goal)
        if mask is not None:
            v = np.where(mask, v, -np.inf)
        return int(np.argmax(v))  # first maximum: lowest index wins ties

    def copy(self) -> GoalConditionedQ:
        q = GoalConditionedQ(self.n_actions, self.key_fn, self.initial_value)
        q.table = {k: v.copy() for k, v in self.table.items()}
        return q

    def to_bytes(self) -> bytes:
        parts = [MAGIC, struct.pack("<III", VERSION, self.n_actions, len(self.table))]
        for key in sorted(self.table):
            obs_key, gk = key
            goal_bytes = gk.encode("utf-8")
            parts.append(struct.pack("<I", len(obs_key)))
            parts.append(struct.pack(f"<{len(obs_key)}q", *(int(v) for v in obs_key)))
            parts.append(struct.pack("<I", len(goal_bytes)))
            parts.append(goal_bytes)
            parts.append(struct.pack(f"<{self.n_actions}d", *self.table[key]))
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data: bytes, key_fn: Optional[Callable] = None) -> GoalConditionedQ:
        if data[:4] != MAGIC:
            raise ValueError("not a policy artifact")
        version, n_actions, n_rows = struct.unpack_from("<III", data, 4)
        if version != VERSION:
            raise ValueError(f"unsupported artifact version {version}")
        q = cls(n_actions, key_fn)
        off = 16
        for _ in range(n_rows):
            (obs_len,) = struct.unpack_from("<I", data, off)
            off += 4
            obs_key = struct.unpack_from(f"<{obs_len}q", data, off)
            off += 8 * obs_len
            (glen,) = struct.unpack_from("<I", data, off)
            off += 4
            gk = data[off:off + glen].decode("utf-8")
            off += glen
            vals = np.array(struct.unpack_from(f"<{n_actions}d", data, off))
            off += 8 * n_actions
            q.table[(tuple(obs_key), gk)] = vals
        return q

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path: str | Path, key_fn: Optional[Callable] = None) -> GoalConditionedQ:
        return cls.from_bytes(Path(path).read_bytes(), key_fn)


def _default_key(obs) -> tuple:
    from ..world import discretize

    if isinstance(obs, np.ndarray):
        return discretize(obs)
    if isinstance(obs, tuple):
        return obs
    return (int(obs),)


def q_update(policy: GoalConditionedQ, transition: Transition, gamma: float, alpha: float) -> GoalConditionedQ:
    """One Q-learning backup on the addressed cell; ``gamma`` is raised to the transition's duration."""
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    t = transition
    row = policy.row(t.obs, t.goal)
    bootstrap = 0.0 if t.done else float(policy.values(t.next_obs, t.goal).max())
    target = t.reward + (gamma ** t.duration) * bootstrap
    row[t.action] += alpha * (target - row[t.action])
    return policy
