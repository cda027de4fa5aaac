"""Training control executors (primitive actions) and skill executors (options) by goal-conditioned Q-learning."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from ..executors import CONTROL_BUDGET, EmptyOptionSet, Executor, run_executor
from ..symbolic import GroundOperator, entails
from .her import STRATEGIES, her_relabel
from .qlearning import GoalConditionedQ, Transition, q_update
from .reward_machine import RewardMachine

Curve = list[tuple[int, float]]


@dataclass(frozen=True)
class TrainingSpec:
    max_steps: int = 50_000
    alpha: float = 0.5
    gamma: float = 0.95
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_fraction: float = 0.5
    eval_every: int = 500
    eval_episodes: int = 20
    threshold: float = 0.8
    her: bool = True
    her_strategy: str = "final"
    her_k: int = 4
    step_budget: int = CONTROL_BUDGET
    seed: int = 0
    goal_predicates: Optional[tuple[str, ...]] = None

    def __post_init__(self):
        if self.max_steps < 0:
            raise ValueError("max_steps must be non-negative")
        for name in ("epsilon_start", "epsilon_end"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")
        if not 0.0 < self.threshold <= 1.0:
            raise ValueError("threshold must lie in (0, 1]")
        if self.eval_every <= 0 or self.eval_episodes <= 0 or self.step_budget <= 0:
            raise ValueError("eval cadence, eval episodes and step budget must be positive")
        if self.her_strategy not in STRATEGIES:
            raise ValueError(f"unknown relabeling strategy {self.her_strategy!r}")

    def epsilon(self, step: int) -> float:
        horizon = self.epsilon_decay_fraction * self.max_steps
        if horizon <= 0:
            return self.epsilon_end
        frac = min(1.0, step / horizon)
        return self.epsilon_start + frac * (self.epsilon_end - self.epsilon_start)


class TabularGoalPolicy:
    """Greedy primitive-action policy read from a goal-conditioned table."""

    def __init__(self, q: GoalConditionedQ, goal: frozenset):
        self.q = q
        self.goal = frozenset(goal)

    def act(self, obs, state) -> int:
        return self.q.greedy(obs, self.goal)


def option_mask(options: Sequence[Executor], state: frozenset) -> np.ndarray:
    return np.array([o.can_start(state) and not o.done(state) for o in options], dtype=bool)


class TabularOptionPolicy:
    """Greedy choice among the options available in the current state."""

    def __init__(self, q: GoalConditionedQ, goal: frozenset):
        self.q = q
        self.goal = frozenset(goal)

    def choose(self, obs, state, options: Sequence[Executor]) -> Optional[Executor]:
        mask = option_mask(options, state)
        if not mask.any():
            return None
        return options[self.q.greedy(obs, self.goal, mask)]


def default_start(env) -> np.ndarray:
    return env.reset(0)


def success_rate(executor: Executor, environment, detector, goal: frozenset, start_fn: Callable,
                 episodes: int) -> float:
    """Greedy evaluation on fresh clones of ``environment``; never touches the original."""
    runs = 1 if getattr(environment, "deterministic", False) else episodes
    wins = 0
    for _ in range(runs):
        env = environment.clone()
        obs = start_fn(env)
        out = run_executor(executor, env, detector, obs)
        wins += int(out.success and entails(detector(out.final_obs), goal))
    return wins / runs


def _bounded_steps(spec: TrainingSpec, should_stop: Optional[Callable[[], bool]]) -> Callable[[int], bool]:
    def exhausted(steps: int) -> bool:
        return steps >= spec.max_steps or (should_stop is not None and should_stop())
    return exhausted


def _replay(q: GoalConditionedQ, transitions: Iterable[Transition], spec: TrainingSpec) -> None:
    for t in transitions:
        q_update(q, t, spec.gamma, spec.alpha)


def train_control_executor(spec: TrainingSpec, ipt, goal: Iterable, curiosity=None,
                           reward_machine: Optional[RewardMachine] = None,
                           start_fn: Callable = default_start,
                           evaluate_fn: Optional[Callable[[Executor], float]] = None,
                           should_stop: Optional[Callable[[], bool]] = None,
                           on_eval: Optional[Callable[[int, float], None]] = None,
                           operator: Optional[GroundOperator] = None,
                           initiation: Optional[frozenset] = None,
                           executor_id: str = "control") -> tuple[Executor, Curve]:
    """Episodic epsilon-greedy Q-learning over primitive actions toward ``goal``.

    Per-step reward adds the goal indicator, the reward machine's shaping and
    (when given) the curiosity bonus. Evaluations run at step 0 and every
    ``spec.eval_every`` steps; training stops once one reaches the threshold.
    """
    goal = frozenset(goal)
    env, detector = ipt.environment, ipt.detector
    n_actions = env.n_actions
    if initiation is None:
        initiation = operator.preconditions if operator is not None else frozenset()
    q = GoalConditionedQ(n_actions)
    rng = np.random.default_rng(spec.seed)

    def snapshot() -> Executor:
        return Executor(executor_id, "control", frozenset(initiation), goal, TabularGoalPolicy(q.copy(), goal),
                        spec.step_budget, operator)

    if evaluate_fn is None:
        def evaluate_fn(executor):
            return success_rate(executor, env, detector, goal, start_fn, spec.eval_episodes)

    curve: Curve = []
    if spec.max_steps == 0:
        return snapshot(), curve
    exhausted = _bounded_steps(spec, should_stop)

    def record(steps: int) -> bool:
        rate = evaluate_fn(snapshot())
        curve.append((steps, rate))
        if on_eval is not None:
            on_eval(steps, rate)
        return rate >= spec.threshold

    steps = 0
    converged = record(0)
    next_eval = spec.eval_every
    while not converged and not exhausted(steps):
        obs = start_fn(env)
        state = detector(obs)
        if reward_machine is not None:
            reward_machine.reset(state)
        episode: list[Transition] = []
        for _ in range(spec.step_budget):
            if entails(state, goal) or exhausted(steps):
                break
            if rng.random() < spec.epsilon(steps):
                action = int(rng.integers(n_actions))
            else:
                action = q.greedy(obs, goal)
            result = env.step(action)
            steps += 1
            nxt = result.observation
            state = detector(nxt)
            achieved = entails(state, goal)
            reward = float(achieved)
            if reward_machine is not None:
                reward += reward_machine.step(state)
            if curiosity is not None:
                reward += curiosity.intrinsic_reward(obs, action, nxt)
                curiosity.update([(obs, action, nxt)])
            t = Transition(obs, action, reward, nxt, achieved or result.terminated, goal)
            q_update(q, t, spec.gamma, spec.alpha)
            episode.append(t)
            obs = nxt
            if steps >= next_eval:
                next_eval += spec.eval_every
                if record(steps):
                    converged = True
                    break
            if result.done:
                break
        if spec.her and episode and not converged:
            extra = her_relabel(episode, detector, spec.her_strategy, spec.her_k, spec.goal_predicates, rng)
            _replay(q, reversed(extra[len(episode):]), spec)
    return snapshot(), curve


def train_skill_executor(spec: TrainingSpec, ipt, options: Sequence[Executor], goal: Iterable,
                         reward_machine: Optional[RewardMachine] = None,
                         start_fn: Callable = default_start,
                         evaluate_fn: Optional[Callable[[Executor], float]] = None,
                         should_stop: Optional[Callable[[], bool]] = None,
                         on_eval: Optional[Callable[[int, float], None]] = None,
                         operator: Optional[GroundOperator] = None,
                         initiation: Optional[frozenset] = None,
                         executor_id: str = "skill") -> tuple[Executor, Curve]:
    """SMDP Q-learning over ``options``: one decision per option run, discounted by its primitive duration."""
    if not options:
        raise EmptyOptionSet(executor_id)
    options = tuple(options)
    goal = frozenset(goal)
    env, detector = ipt.environment, ipt.detector
    if initiation is None:
        initiation = operator.preconditions if operator is not None else frozenset()
    q = GoalConditionedQ(len(options))
    rng = np.random.default_rng(spec.seed)

    def snapshot() -> Executor:
        return Executor(executor_id, "skill", frozenset(initiation), goal, TabularOptionPolicy(q.copy(), goal),
                        spec.step_budget, operator, options)

    if evaluate_fn is None:
        def evaluate_fn(executor):
            return success_rate(executor, env, detector, goal, start_fn, spec.eval_episodes)

    curve: Curve = []
    if spec.max_steps == 0:
        return snapshot(), curve
    exhausted = _bounded_steps(spec, should_stop)

    def record(steps: int) -> bool:
        rate = evaluate_fn(snapshot())
        curve.append((steps, rate))
        if on_eval is not None:
            on_eval(steps, rate)
        return rate >= spec.threshold

    steps = 0
    converged = record(0)
    next_eval = spec.eval_every
    while not converged and not exhausted(steps):
        obs = start_fn(env)
        state = detector(obs)
        if reward_machine is not None:
            reward_machine.reset(state)
        episode: list[Transition] = []
        used = 0
        while used < spec.step_budget and not entails(state, goal) and not exhausted(steps):
            mask = option_mask(options, state)
            if not mask.any():
                break
            if rng.random() < spec.epsilon(steps):
                choice = int(rng.choice(np.flatnonzero(mask)))
            else:
                choice = q.greedy(obs, goal, mask)
            out = run_executor(options[choice], env, detector, obs, spec.step_budget - used)
            if out.steps_used == 0:
                break
            used += out.steps_used
            steps += out.steps_used
            reward = 0.0
            for i, step in enumerate(out.trace):
                s = detector(step.next_obs)
                r = float(entails(s, goal))
                if reward_machine is not None:
                    r += reward_machine.step(s)
                reward += spec.gamma**i * r
            nxt = out.final_obs
            state = detector(nxt)
            achieved = entails(state, goal)
            t = Transition(obs, choice, reward, nxt, achieved or out.episode_over, goal, out.steps_used)
            q_update(q, t, spec.gamma, spec.alpha)
            episode.append(t)
            obs = nxt
            if steps >= next_eval:
                next_eval = (steps // spec.eval_every + 1) * spec.eval_every
                if record(steps):
                    converged = True
                    break
            if out.episode_over:
                break
        if spec.her and episode and not converged:
            extra = her_relabel(episode, detector, spec.her_strategy, spec.her_k, spec.goal_predicates, rng)
            _replay(q, reversed(extra[len(episode):]), spec)
    return snapshot(), curve


def steps_to_threshold(curve: Curve, threshold: float) -> Optional[int]:
    for step, rate in curve:
        if rate >= threshold:
            return step
    return None


def write_curve(curve: Curve, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "success_rate"])
        for step, rate in curve:
            w.writerow([step, f"{rate:.6f}"])


def save_policy(executor: Executor, path: str | Path) -> str:
    executor.policy.q.save(path)
    executor.policy_path = str(path)
    return str(path)
