"""MDP contract, the GridCan environment, its detector and novelty injection."""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Optional

import numpy as np

from .symbolic import Atom, Domain, PlanningTask

UP, DOWN, LEFT, RIGHT, PICK, PLACE, TOGGLE = range(7)
ACTION_NAMES = ("up", "down", "left", "right", "pick", "place", "toggle")
MOVES = {UP: (0, -1), DOWN: (0, 1), LEFT: (-1, 0), RIGHT: (1, 0)}

SCENARIOS = ("door", "obstacle", "elevated", "hole", "light-off")

Cell = tuple[int, int]


class EpisodeFinished(RuntimeError):
    pass


class UnknownScenario(ValueError):
    pass


@dataclass(frozen=True)
class MdpConfig:
    gamma: float = 0.95
    episode_step_limit: int = 1000

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        if self.episode_step_limit <= 0:
            raise ValueError("episode_step_limit must be positive")


@dataclass(frozen=True)
class StepResult:
    observation: np.ndarray
    extrinsic_reward: float
    terminated: bool
    truncated: bool

    @property
    def done(self) -> bool:
        return self.terminated or self.truncated


@dataclass(frozen=True)
class NoveltyScenario:
    name: str
    parameters: dict = field(default_factory=dict)

    @classmethod
    def from_json(cls, payload: dict) -> NoveltyScenario:
        return cls(payload["name"], dict(payload.get("parameters", {})))

    @classmethod
    def load(cls, path: str | Path) -> NoveltyScenario:
        return cls.from_json(json.loads(Path(path).read_text()))

    def to_json(self) -> dict:
        return {"name": self.name, "parameters": self.parameters}


@dataclass(frozen=True)
class GridLayout:
    """Static baseline layout. Cells are (x, y) with y growing southwards."""

    size: int = 8
    agent_start: Cell = (0, 0)
    can_start: Cell = (2, 2)
    bin_cell: Cell = (6, 6)
    wall_row: int = 4
    door_cell: Cell = (4, 4)
    door_switch: Cell = (4, 3)
    region_split: Cell = (2, 4)  # Q1/Q3 start at x >= 2, Q2/Q3 at y >= 4
    anchors: tuple[Cell, ...] = ((0, 0), (2, 0), (0, 5), (4, 4))

    @property
    def walls(self) -> frozenset[Cell]:
        return frozenset((x, self.wall_row) for x in range(self.size) if (x, self.wall_row) != self.door_cell)

    def region(self, cell: Cell) -> int:
        x, y = cell
        sx, sy = self.region_split
        return (1 if x >= sx else 0) + (2 if y >= sy else 0)

    def region_name(self, cell: Cell) -> str:
        return f"Q{self.region(cell)}"

    def cells_of(self, region: int) -> list[Cell]:
        return [
            (x, y)
            for y in range(self.size)
            for x in range(self.size)
            if self.region((x, y)) == region and (x, y) not in self.walls
        ]

    def in_bounds(self, cell: Cell) -> bool:
        return 0 <= cell[0] < self.size and 0 <= cell[1] < self.size


DEFAULT_LAYOUT = GridLayout()


def bfs_path(layout: GridLayout, start: Cell, targets: Iterable[Cell], blocked: Iterable[Cell] = ()) -> Optional[list[int]]:
    """Shortest move sequence from ``start`` to any target cell (UP, DOWN, LEFT, RIGHT order)."""
    targets = set(targets)
    blocked = set(blocked) | layout.walls
    if start in targets:
        return []
    parent: dict[Cell, tuple[Cell, int] | None] = {start: None}
    queue = deque([start])
    while queue:
        cell = queue.popleft()
        for action, (dx, dy) in MOVES.items():
            nxt = (cell[0] + dx, cell[1] + dy)
            if not layout.in_bounds(nxt) or nxt in blocked or nxt in parent:
                continue
            parent[nxt] = (cell, action)
            if nxt in targets:
                path = []
                while parent[nxt] is not None:
                    nxt, a = parent[nxt]
                    path.append(a)
                return path[::-1]
            queue.append(nxt)
    return None


class GridCan:
    """8x8 pick-and-place grid with injectable novelties.

    Observation: ``[ax/7, ay/7, cx/7, cy/7, holding, door_open, light_on]``.
    The can moves with the agent while held and sits on the bin cell once placed.
    """

    n_actions = 7
    obs_size = 7
    deterministic = True  # reset and step use no randomness

    def __init__(self, layout: GridLayout = DEFAULT_LAYOUT, mdp: MdpConfig = MdpConfig()):
        self.layout = layout
        self.mdp = mdp
        self.scenarios: list[NoveltyScenario] = []
        self._blocked: set[Cell] = set()
        self._holes: set[Cell] = set()
        self._door_closed = False
        self._door_switch = layout.door_switch
        self._dark = False
        self._light_switch: Cell | None = None
        self._elevated = False
        self._ready = False
        self.episode_steps = 0

    def clone(self) -> GridCan:
        env = GridCan(self.layout, self.mdp)
        for s in self.scenarios:
            env.inject_novelty(s)
        return env

    def inject_novelty(self, scenario: NoveltyScenario) -> GridCan:
        p = scenario.parameters
        L = self.layout
        if scenario.name == "door":
            self._door_closed = True
            self._door_switch = tuple(p.get("switch_cell", L.door_switch))
            door = tuple(p.get("door_cell", L.door_cell))
            if door != L.door_cell:
                raise ValueError("door novelty must use the layout's passage cell")
        elif scenario.name == "obstacle":
            cells = {tuple(c) for c in p.get("cells", [])}
            self._check_cells(cells)
            self._blocked |= cells
        elif scenario.name == "elevated":
            self._elevated = True
        elif scenario.name == "hole":
            cells = {tuple(c) for c in p.get("cells", [])}
            self._check_cells(cells)
            self._holes |= cells
        elif scenario.name == "light-off":
            self._dark = True
            self._light_switch = tuple(p.get("switch_cell", (1, 3)))
            self._check_cells({self._light_switch})
        else:
            raise UnknownScenario(scenario.name)
        self.scenarios.append(scenario)
        self._ready = False
        return self

    def _check_cells(self, cells: set) -> None:
        for c in cells:
            if not self.layout.in_bounds(c) or c in self.layout.walls:
                raise ValueError(f"invalid cell {c} for this layout")

    # state handling

    def reset(self, seed: int = 0) -> np.ndarray:
        self.rng = np.random.default_rng(seed)
        L = self.layout
        self.agent = L.agent_start
        self.can = L.can_start
        self.holding = False
        self.in_bin = False
        self.door_open = not self._door_closed
        self.light_on = not self._dark
        self.episode_steps = 0
        self._ready = True
        return self.observe()

    def observe(self) -> np.ndarray:
        n = self.layout.size - 1
        can = self.agent if self.holding else self.can
        cx, cy = (can[0] / n, can[1] / n) if self.light_on else (0.0, 0.0)
        return np.array(
            [self.agent[0] / n, self.agent[1] / n, cx, cy, float(self.holding), float(self.door_open), float(self.light_on)]
        )

    def passable(self, cell: Cell) -> bool:
        if not self.layout.in_bounds(cell) or cell in self.layout.walls or cell in self._blocked:
            return False
        return not (cell == self.layout.door_cell and not self.door_open)

    def step(self, action: int) -> StepResult:
        if not self._ready:
            raise EpisodeFinished("reset() before stepping")
        if not 0 <= action < self.n_actions:
            raise ValueError(f"invalid action {action}")
        reward, terminated = 0.0, False
        if action in MOVES:
            dx, dy = MOVES[action]
            nxt = (self.agent[0] + dx, self.agent[1] + dy)
            if self.passable(nxt):
                self.agent = nxt
            if self.agent in self._holes:
                terminated = True
        elif action == PICK:
            if not self.holding and not self.in_bin:
                spot = (self.can[0], self.can[1] - 1) if self._elevated else self.can
                if self.agent == spot:
                    self.holding = True
        elif action == PLACE:
            if self.holding and self.agent == self.layout.bin_cell:
                self.holding = False
                self.in_bin = True
                self.can = self.layout.bin_cell
                reward, terminated = 1.0, True
        elif action == TOGGLE:
            if self.agent == self._door_switch:
                self.door_open = True
            if self._light_switch is not None and self.agent == self._light_switch:
                self.light_on = True
        if self.holding:
            self.can = self.agent
        self.episode_steps += 1
        truncated = not terminated and self.episode_steps >= self.mdp.episode_step_limit
        if terminated or truncated:
            self._ready = False
        return StepResult(self.observe(), reward, terminated, truncated)


def cell_of(obs: np.ndarray, layout: GridLayout = DEFAULT_LAYOUT) -> Cell:
    n = layout.size - 1
    return int(round(obs[0] * n)), int(round(obs[1] * n))


def can_cell_of(obs: np.ndarray, layout: GridLayout = DEFAULT_LAYOUT) -> Cell | None:
    if obs[6] < 0.5:
        return None
    n = layout.size - 1
    return int(round(obs[2] * n)), int(round(obs[3] * n))


def discretize(obs: np.ndarray, layout: GridLayout = DEFAULT_LAYOUT) -> tuple[int, ...]:
    n = layout.size - 1
    return tuple(int(round(v * n)) for v in obs[:4]) + tuple(int(round(v)) for v in obs[4:])


@dataclass(frozen=True)
class GridCanDetector:
    """Pure map from GridCan observations to symbolic states."""

    layout: GridLayout = DEFAULT_LAYOUT
    static_atoms: frozenset = frozenset(
        {Atom("container-at", ("bin", "Q3")), Atom("switch-at", ("door-switch", "Q1"))}
    )

    def __call__(self, obs: np.ndarray) -> frozenset:
        atoms = set(self.static_atoms)
        atoms.add(Atom("at-agent", (self.layout.region_name(cell_of(obs, self.layout)),)))
        if obs[4] >= 0.5:
            atoms.add(Atom("holding", ("can",)))
        else:
            can = can_cell_of(obs, self.layout)
            if can is not None:
                if can == self.layout.bin_cell:
                    atoms.add(Atom("in", ("can", "bin")))
                else:
                    atoms.add(Atom("at", ("can", self.layout.region_name(can))))
        if obs[5] >= 0.5:
            atoms.add(Atom("door-open"))
        if obs[6] >= 0.5:
            atoms.add(Atom("light-on"))
        return frozenset(atoms)


def detect(detector: Callable[[np.ndarray], frozenset], observation: np.ndarray) -> frozenset:
    return detector(observation)


@dataclass
class IntegratedTask:
    """T, M, d and e bundled together; ``task.domain`` is the agent's current domain."""

    task: PlanningTask
    environment: Any
    detector: Callable[[np.ndarray], frozenset]
    executor_map: Any  # executors.ExecutorLibrary

    def with_domain(self, domain: Domain) -> IntegratedTask:
        return IntegratedTask(self.task.with_domain(domain), self.environment, self.detector, self.executor_map)


class TrajectoryRecorder:
    """Wraps an environment and appends one JSON line per step."""

    def __init__(self, env, path: str | Path):
        self.env = env
        self._fh = open(path, "w")

    def __getattr__(self, name):
        return getattr(self.env, name)

    def reset(self, seed: int = 0):
        return self.env.reset(seed)

    def step(self, action: int) -> StepResult:
        result = self.env.step(action)
        record = {
            "obs": [round(float(v), 6) for v in result.observation],
            "action": int(action),
            "reward": result.extrinsic_reward,
            "flags": {"terminated": result.terminated, "truncated": result.truncated},
        }
        self._fh.write(json.dumps(record) + "\n")
        return result

    def close(self) -> None:
        self._fh.close()
