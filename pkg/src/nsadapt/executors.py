"""Executors, the operator-to-executor library, hierarchical execution and novelty classification."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Sequence

import numpy as np

from .planner import BudgetExhausted, NoPlanFound, Plan, SearchConfig, plan
from .symbolic import GroundOperator, entails, ground_operators, state_key
from .world import (
    ACTION_NAMES,
    DEFAULT_LAYOUT,
    PICK,
    PLACE,
    GridLayout,
    IntegratedTask,
    bfs_path,
    can_cell_of,
    cell_of,
)

CONTROL_BUDGET = 200
SKILL_BUDGET = 600

SUCCESS = "success"
BUDGET_EXHAUSTED = "budget_exhausted"
DEAD_END = "dead_end"
PRECONDITION_VIOLATION = "precondition_violation"


class EmptyOptionSet(ValueError):
    pass


@dataclass(eq=False)
class Executor:
    """An executor triple: initiation atoms, a policy and termination atoms.

    ``termination=None`` marks a one-shot option that simply spends its step
    budget; such options exist only as building blocks for skills.
    """

    id: str
    kind: str
    initiation: frozenset
    termination: Optional[frozenset]
    policy: Any
    step_budget: int = CONTROL_BUDGET
    operator: Optional[GroundOperator] = None
    options: tuple = ()
    policy_path: Optional[str] = None

    def __post_init__(self):
        if self.kind not in ("control", "skill"):
            raise ValueError(f"unknown executor kind {self.kind!r}")
        if self.step_budget <= 0:
            raise ValueError("step_budget must be positive")
        if self.kind == "skill" and not self.options:
            raise EmptyOptionSet(self.id)

    def can_start(self, state: frozenset) -> bool:
        return entails(state, self.initiation)

    def done(self, state: frozenset) -> bool:
        return self.termination is not None and entails(state, self.termination)

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind,
            "operator": None if self.operator is None else self.operator.to_json(),
            "budget": self.step_budget,
            "initiation": [str(a) for a in sorted(self.initiation)],
            "termination": None if self.termination is None else [str(a) for a in sorted(self.termination)],
            "options": [o.id for o in self.options],
            "policy": self.policy_path,
        }


@dataclass(frozen=True)
class PrimitiveStep:
    obs: np.ndarray
    action: int
    reward: float
    next_obs: np.ndarray
    terminated: bool
    truncated: bool


@dataclass
class ExecutionOutcome:
    status: str
    steps_used: int
    final_symbolic: frozenset
    trace: list = field(default_factory=list)
    final_obs: Optional[np.ndarray] = None
    episode_over: bool = False

    @property
    def success(self) -> bool:
        return self.status == SUCCESS


# scripted policies


class NavigatePolicy:
    """Follows a BFS path over the baseline layout, then issues ``final_action``.

    The path ignores novelties on purpose: scripted executors encode the
    baseline world and break when it changes.
    """

    def __init__(self, targets: Callable[[np.ndarray], Sequence], final_action: Optional[int] = None,
                 layout: GridLayout = DEFAULT_LAYOUT):
        self.targets = targets
        self.final_action = final_action
        self.layout = layout

    def act(self, obs: np.ndarray, state: frozenset) -> int:
        targets = self.targets(obs)
        if targets:
            path = bfs_path(self.layout, cell_of(obs, self.layout), targets)
            if path:
                return path[0]
        return self.final_action if self.final_action is not None else 0


class ConstantPolicy:
    def __init__(self, action: int):
        self.action = action

    def act(self, obs, state) -> int:
        return self.action


class SequencePolicy:
    """Runs the first option, in list order, that can start and has not terminated."""

    def choose(self, obs, state, options: Sequence[Executor]) -> Optional[Executor]:
        for opt in options:
            if opt.can_start(state) and not opt.done(state):
                return opt
        return None


def scripted_executor(op: GroundOperator, layout: GridLayout = DEFAULT_LAYOUT) -> Optional[Executor]:
    """Baseline oracle executor for goto/pick/place ground operators."""
    if op.name == "goto":
        target = int(op.entities[1][1:])
        if op.entities[0] == op.entities[1]:
            return None
        anchor = layout.anchors[target]
        policy = NavigatePolicy(lambda obs: [anchor], None, layout)
    elif op.name == "pick":
        def can_target(obs):
            c = can_cell_of(obs, layout)
            return [c] if c is not None else []
        policy = NavigatePolicy(can_target, PICK, layout)
    elif op.name == "place":
        policy = NavigatePolicy(lambda obs: [layout.bin_cell], PLACE, layout)
    else:
        return None
    return Executor(f"scripted-{op}", "control", op.preconditions, op.add_effects, policy, CONTROL_BUDGET, op)


def primitive_options(n_actions: int = len(ACTION_NAMES)) -> list[Executor]:
    return [
        Executor(f"primitive-{ACTION_NAMES[a]}", "control", frozenset(), None, ConstantPolicy(a), 1)
        for a in range(n_actions)
    ]


class ExecutorLibrary:
    """Maps ground operators to trial-ordered executor lists."""

    def __init__(self):
        self._map: dict[GroundOperator, list[Executor]] = {}

    def register(self, op: GroundOperator, executor: Executor, front: bool = True) -> None:
        entries = self._map.setdefault(op, [])
        if executor in entries:
            entries.remove(executor)
        if front:
            entries.insert(0, executor)
        else:
            entries.append(executor)

    def select_executors(self, op: GroundOperator) -> list[Executor]:
        return list(self._map.get(op, ()))

    def record_result(self, op: GroundOperator, executor: Executor, success: bool) -> None:
        if success and op in self._map and executor in self._map[op]:
            self._map[op].remove(executor)
            self._map[op].insert(0, executor)

    def covered(self, op: GroundOperator) -> bool:
        return bool(self._map.get(op))

    def operators(self) -> list[GroundOperator]:
        return [op for op, ex in self._map.items() if ex]

    def executors(self) -> list[Executor]:
        seen: dict[int, Executor] = {}
        for entries in self._map.values():
            for ex in entries:
                seen.setdefault(id(ex), ex)
        return list(seen.values())

    def copy(self) -> ExecutorLibrary:
        lib = ExecutorLibrary()
        lib._map = {op: list(ex) for op, ex in self._map.items()}
        return lib

    def to_json(self) -> list[dict]:
        return [ex.to_json() for op in sorted(self._map, key=str) for ex in self._map[op]]


def select_executors(library: ExecutorLibrary, op: GroundOperator) -> list[Executor]:
    return library.select_executors(op)


def scripted_library(domain, layout: GridLayout = DEFAULT_LAYOUT) -> ExecutorLibrary:
    library = ExecutorLibrary()
    for op in ground_operators(domain):
        ex = scripted_executor(op, layout)
        if ex is not None:
            library.register(op, ex, front=False)
    return library


def run_executor(executor: Executor, environment, detector, start_obs: np.ndarray,
                 budget: Optional[int] = None) -> ExecutionOutcome:
    """Runs ``executor`` until its termination holds, its budget runs out or the episode ends."""
    budget = executor.step_budget if budget is None else min(budget, executor.step_budget)
    obs = start_obs
    state = detector(obs)
    if not executor.can_start(state):
        return ExecutionOutcome(PRECONDITION_VIOLATION, 0, state, [], obs)
    if executor.done(state):
        return ExecutionOutcome(SUCCESS, 0, state, [], obs)
    trace: list[PrimitiveStep] = []
    steps = 0
    while steps < budget:
        if executor.kind == "control":
            action = executor.policy.act(obs, state)
            result = environment.step(action)
            trace.append(PrimitiveStep(obs, action, result.extrinsic_reward, result.observation,
                                       result.terminated, result.truncated))
            steps += 1
            obs = result.observation
            over = result.done
        else:
            option = executor.policy.choose(obs, state, executor.options)
            if option is None:
                return ExecutionOutcome(DEAD_END, steps, state, trace, obs)
            sub = run_executor(option, environment, detector, obs, budget - steps)
            trace.extend(sub.trace)
            steps += sub.steps_used
            obs = sub.final_obs
            over = sub.episode_over
            if sub.steps_used == 0:
                return ExecutionOutcome(DEAD_END, steps, detector(obs), trace, obs, over)
        state = detector(obs)
        if executor.done(state):
            return ExecutionOutcome(SUCCESS, steps, state, trace, obs, over)
        if over:
            return ExecutionOutcome(DEAD_END, steps, state, trace, obs, True)
    if executor.termination is None:
        return ExecutionOutcome(SUCCESS, steps, state, trace, obs)
    return ExecutionOutcome(BUDGET_EXHAUSTED, steps, state, trace, obs)


@dataclass
class PlanOutcome:
    success: bool
    reason: str
    step_index: Optional[int] = None
    outcome: Optional[ExecutionOutcome] = None
    final_obs: Optional[np.ndarray] = None
    steps_used: int = 0
    executed: int = 0
    trace: list = field(default_factory=list)

    @property
    def episode_over(self) -> bool:
        return bool(self.trace) and (self.trace[-1].terminated or self.trace[-1].truncated)


def execute_plan(ipt: IntegratedTask, p: Plan, start_obs: np.ndarray, library: Optional[ExecutorLibrary] = None,
                 promote: bool = True) -> PlanOutcome:
    """Executes ``p`` operator by operator, checking the expected state at every boundary.

    Failure reasons: ``executors_failed``, ``no_executor``, ``unexpected_state``
    (an executor succeeded but the detected state lacks the step's effects or
    the next step's preconditions) and ``goal_not_reached``.
    """
    library = ipt.executor_map if library is None else library
    env, detector = ipt.environment, ipt.detector
    obs = start_obs
    trace: list = []
    steps = 0
    for k, op in enumerate(p.steps):
        candidates = library.select_executors(op)
        if not candidates:
            return PlanOutcome(False, "no_executor", k, None, obs, steps, k, trace)
        outcome = None
        for ex in candidates:
            outcome = run_executor(ex, env, detector, obs)
            trace.extend(outcome.trace)
            steps += outcome.steps_used
            obs = outcome.final_obs
            if promote:
                library.record_result(op, ex, outcome.success)
            if outcome.success or outcome.episode_over:
                break
        if not outcome.success:
            return PlanOutcome(False, "executors_failed", k, outcome, obs, steps, k, trace)
        if not entails(outcome.final_symbolic, boundary_condition(p, k, ipt.task.goal)):
            return PlanOutcome(False, "unexpected_state", k, outcome, obs, steps, k + 1, trace)
    if not entails(detector(obs), ipt.task.goal):
        return PlanOutcome(False, "goal_not_reached", len(p.steps), None, obs, steps, len(p.steps), trace)
    return PlanOutcome(True, SUCCESS, None, None, obs, steps, len(p.steps), trace)


def boundary_condition(p: Plan, k: int, goal: frozenset) -> frozenset:
    """Atoms the detected state must hold after step ``k``: its add effects plus what comes next needs."""
    nxt = p.steps[k + 1].preconditions if k + 1 < len(p.steps) else goal
    return p.steps[k].add_effects | nxt


def covered_plan(ipt: IntegratedTask, state: frozenset, library: Optional[ExecutorLibrary] = None,
                 config: SearchConfig = SearchConfig()) -> Optional[Plan]:
    """Shortest plan from ``state`` that uses only operators with at least one executor."""
    library = ipt.executor_map if library is None else library
    ops = [op for op in ground_operators(ipt.task.domain) if library.covered(op)]
    try:
        return plan(ipt.task.with_initial(state), ops, config)
    except (NoPlanFound, BudgetExhausted):
        return None


def classify_novelty(ipt: IntegratedTask, failure: PlanOutcome, library: Optional[ExecutorLibrary] = None) -> str:
    """``local`` when an executor-covered plan exists from the detected state, else ``global``."""
    state = ipt.detector(failure.final_obs)
    if entails(state, ipt.task.goal):
        return "local"
    return "local" if covered_plan(ipt, state, library) is not None else "global"


def compose_skill(options: Sequence[Executor], initiation: frozenset, termination: frozenset,
                  budget: int = SKILL_BUDGET, executor_id: str = "skill",
                  operator: Optional[GroundOperator] = None) -> Executor:
    if not options:
        raise EmptyOptionSet(executor_id)
    return Executor(executor_id, "skill", frozenset(initiation), frozenset(termination), SequencePolicy(),
                    budget, operator, tuple(options))


def describe_state(state: frozenset) -> str:
    return state_key(state)
