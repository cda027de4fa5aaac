"""The adaptation loop: plan, execute, classify failures, learn executors or operators, re-plan.

Every interaction with the run's environment goes through :class:`CountingEnv`,
whose counter is the step axis of all metrics (T_adapt included). Evaluations
run on uncounted clones and never modify the library.
"""

from __future__ import annotations

import csv
import json
import logging
import re
import statistics
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import fixtures
from .executors import (
    CONTROL_BUDGET,
    SKILL_BUDGET,
    ExecutorLibrary,
    PlanOutcome,
    classify_novelty,
    execute_plan,
    primitive_options,
    scripted_library,
)
from .imagination import (
    DegenerateOperator,
    InsufficientData,
    TransitionLog,
    export_operators,
    imagine_operators,
    induce_operator,
    merge_into_domain,
    record_transition,
)
from .learning.curiosity import CuriosityModel
from .learning.qlearning import GoalConditionedQ, Transition, q_update
from .learning.reward_machine import reward_machine_from_plan
from .learning.training import (
    TrainingSpec,
    save_policy,
    success_rate,
    train_control_executor,
    train_skill_executor,
    write_curve,
)
from .planner import BudgetExhausted, NoPlanFound, Plan, SearchConfig, plan
from .symbolic import (
    Domain,
    GroundOperator,
    PlanningTask,
    entails,
    ground_operators,
    serialize_domain,
)
from .world import SCENARIOS, GridCan, GridCanDetector, IntegratedTask

log = logging.getLogger(__name__)

NOT_CONVERGED = "not-converged"
PHASES = ("baseline", "adapting", "converged")


class ConfigInvalid(ValueError):
    pass


class FixtureMissing(FileNotFoundError):
    pass


class StepLimitReached(RuntimeError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    domain: Optional[str] = None  # None: shipped GridCan fixture
    problem: Optional[str] = None
    scenario: Optional[str] = None
    seeds: tuple[int, ...] = tuple(range(10))
    max_adaptation_steps: int = 100_000
    eval_every: int = 2_000
    eval_episodes: int = 20
    convergence_threshold: float = 0.8
    her: bool = True
    curiosity: bool = True
    eta: float = 0.1
    control_budget: int = CONTROL_BUDGET
    skill_budget: int = SKILL_BUDGET
    train_steps: int = 40_000
    train_eval_every: int = 250
    exploration_cap: int = 10_000
    exploration_epsilon: float = 0.1
    alpha: float = 0.5
    gamma: float = 0.95
    max_replans: int = 5
    withheld_operators: tuple[str, ...] = ("toggle-switch",)
    output_dir: str = "runs"

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        object.__setattr__(self, "withheld_operators", tuple(self.withheld_operators))
        if self.max_adaptation_steps < 0:
            raise ConfigInvalid("max_adaptation_steps must be non-negative")
        if self.eval_every <= 0 or self.eval_episodes < 1:
            raise ConfigInvalid("eval_every must be positive and eval_episodes at least 1")
        if self.max_adaptation_steps > 0 and self.eval_every > self.max_adaptation_steps:
            raise ConfigInvalid("eval_every must not exceed max_adaptation_steps")
        if not 0.0 < self.convergence_threshold <= 1.0:
            raise ConfigInvalid("convergence_threshold must lie in (0, 1]")
        if self.eta <= 0 or self.control_budget <= 0 or self.skill_budget <= 0:
            raise ConfigInvalid("eta and executor budgets must be positive")
        if self.train_steps <= 0 or self.train_eval_every <= 0 or self.exploration_cap <= 0:
            raise ConfigInvalid("training and exploration budgets must be positive")
        if self.scenario is not None and self.scenario not in SCENARIOS:
            raise ConfigInvalid(f"unknown scenario {self.scenario!r}")
        if not self.seeds:
            raise ConfigInvalid("at least one seed is required")

    @classmethod
    def from_json(cls, payload: dict) -> ExperimentConfig:
        known = set(cls.__dataclass_fields__)
        extra = sorted(set(payload) - known)
        if extra:
            raise ConfigInvalid(f"unknown config fields: {', '.join(extra)}")
        try:
            return cls(**payload)
        except TypeError as exc:
            raise ConfigInvalid(str(exc)) from exc

    @classmethod
    def load(cls, path: str | Path) -> ExperimentConfig:
        path = Path(path)
        if not path.exists():
            raise FixtureMissing(str(path))
        try:
            payload = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigInvalid(f"{path}: {exc}") from exc
        return cls.from_json(payload)

    def to_json(self) -> dict:
        d = asdict(self)
        d["seeds"] = list(self.seeds)
        d["withheld_operators"] = list(self.withheld_operators)
        return d

    def training_spec(self, max_steps: int, step_budget: int, seed: int) -> TrainingSpec:
        return TrainingSpec(max_steps=max_steps, alpha=self.alpha, gamma=self.gamma,
                            eval_every=self.train_eval_every, eval_episodes=self.eval_episodes,
                            threshold=self.convergence_threshold, her=self.her, step_budget=step_budget,
                            seed=seed)


@dataclass(frozen=True)
class MetricsRecord:
    environment_step: int
    eval_success_rate: float
    phase: str


@dataclass
class RunSummary:
    seed: int
    scenario: Optional[str]
    t_adapt: Optional[int]
    post_success: Optional[float]
    learned_executors: list[str] = field(default_factory=list)
    learned_operators: list[str] = field(default_factory=list)
    novelty_classes: list[str] = field(default_factory=list)
    total_steps: int = 0

    @property
    def converged(self) -> bool:
        return self.t_adapt is not None

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "scenario": self.scenario,
            "T_adapt": NOT_CONVERGED if self.t_adapt is None else self.t_adapt,
            "post_success": self.post_success,
            "learned_executors": list(self.learned_executors),
            "learned_operators": list(self.learned_operators),
            "novelty_classes": list(self.novelty_classes),
            "total_steps": self.total_steps,
        }

    @classmethod
    def from_json(cls, payload: dict) -> RunSummary:
        t = payload["T_adapt"]
        return cls(payload["seed"], payload["scenario"], None if t == NOT_CONVERGED else int(t),
                   payload["post_success"], list(payload["learned_executors"]),
                   list(payload["learned_operators"]), list(payload.get("novelty_classes", [])),
                   int(payload.get("total_steps", 0)))


class CountingEnv:
    """Wraps an environment; counts every step and refuses to exceed ``limit``."""

    def __init__(self, env, limit: int):
        self.env = env
        self.limit = limit
        self.steps = 0

    @property
    def n_actions(self) -> int:
        return self.env.n_actions

    @property
    def deterministic(self) -> bool:
        return getattr(self.env, "deterministic", False)

    def reset(self, seed: int = 0):
        return self.env.reset(seed)

    def step(self, action: int):
        if self.steps >= self.limit:
            raise StepLimitReached(self.steps)
        self.steps += 1
        return self.env.step(action)

    def clone(self):
        return self.env.clone()

    def exhausted(self) -> bool:
        return self.steps >= self.limit


# pipeline


class Planner:
    """Plans from detected states with the agent's current domain; caches groundings per domain."""

    def __init__(self, goal: frozenset, config: SearchConfig = SearchConfig()):
        self.goal = frozenset(goal)
        self.config = config
        self._cache: dict[int, tuple[Domain, list[GroundOperator]]] = {}

    def ground(self, domain: Domain) -> list[GroundOperator]:
        hit = self._cache.get(id(domain))
        if hit is None or hit[0] is not domain:
            hit = (domain, ground_operators(domain))
            self._cache[id(domain)] = hit
        return hit[1]

    def task(self, domain: Domain, state: frozenset, goal: Optional[frozenset] = None) -> PlanningTask:
        return PlanningTask("adapt", domain, state, self.goal if goal is None else goal)

    def __call__(self, domain: Domain, state: frozenset) -> Optional[Plan]:
        try:
            return plan(self.task(domain, state), self.ground(domain), self.config)
        except (NoPlanFound, BudgetExhausted):
            return None


@dataclass
class Attempt:
    success: bool
    reason: str
    plan: Optional[Plan] = None
    outcome: Optional[PlanOutcome] = None
    final_obs: Optional[np.ndarray] = None
    stopped_before: bool = False

    @property
    def failed_op(self) -> Optional[GroundOperator]:
        if self.plan is None or self.outcome is None or self.outcome.step_index is None:
            return None
        if self.outcome.step_index >= len(self.plan.steps):
            return None
        return self.plan.steps[self.outcome.step_index]


def run_pipeline(env, detector, domain: Domain, planner: Planner, library: ExecutorLibrary, seed: int = 0,
                 promote: bool = True, max_replans: int = 5, stop_before: Optional[GroundOperator] = None) -> Attempt:
    """One episode: plan from the detected reset state and execute, re-planning on unexpected states.

    With ``stop_before``, execution halts right before that operator would run
    (its preconditions hold) and the attempt reports ``stopped_before``.
    """
    obs = env.reset(seed)
    attempt = Attempt(False, "no_plan", final_obs=obs)
    for _ in range(max_replans + 1):
        state = detector(obs)
        p = planner(domain, state)
        if p is None:
            return Attempt(False, "no_plan", None, None, obs)
        if stop_before is not None and stop_before in p.steps:
            j = p.steps.index(stop_before)
            prefix = Plan(p.steps[:j], p.expected_states[:j + 1])
            sub = IntegratedTask(planner.task(domain, state, stop_before.preconditions), env, detector, library)
            out = execute_plan(sub, prefix, obs, library, promote)
            if out.success:
                return Attempt(True, "stopped_before", p, out, out.final_obs, True)
        else:
            ipt = IntegratedTask(planner.task(domain, state), env, detector, library)
            out = execute_plan(ipt, p, obs, library, promote)
            if out.success:
                return Attempt(True, "success", p, out, out.final_obs)
        attempt = Attempt(False, out.reason, p, out, out.final_obs)
        if out.reason != "unexpected_state" or out.episode_over:
            return attempt
        obs = out.final_obs
    return attempt


def evaluate(env, detector, domain: Domain, planner: Planner, library: ExecutorLibrary, episodes: int,
             seed: int = 0, max_replans: int = 5) -> float:
    """Greedy success rate of the whole pipeline on fresh clones; the library is never modified."""
    if episodes < 1:
        raise ValueError("episodes must be at least 1")
    runs = 1 if getattr(env, "deterministic", False) else episodes
    lib = library.copy()
    wins = 0
    for i in range(runs):
        clone = env.clone()
        att = run_pipeline(clone, detector, domain, planner, lib, seed * 1000 + i, False, max_replans)
        wins += int(att.success and entails(detector(att.final_obs), planner.goal))
    return wins / runs


def compute_t_adapt(records: Sequence[MetricsRecord], threshold: float) -> Optional[int]:
    for r in records:
        if r.phase != "baseline" and r.eval_success_rate >= threshold:
            return r.environment_step
    return None


def aggregate(summaries: Sequence[RunSummary]) -> dict:
    if not summaries:
        raise ValueError("nothing to aggregate")
    ts = [s.t_adapt for s in summaries if s.t_adapt is not None]
    posts = [s.post_success for s in summaries if s.post_success is not None]
    return {
        "runs": len(summaries),
        "converged": len(ts),
        "not_converged": len(summaries) - len(ts),
        "mean_T_adapt": round(float(np.mean(ts)), 6) if ts else None,
        "median_T_adapt": round(float(statistics.median(ts)), 6) if ts else None,
        "mean_post_success": round(float(np.mean(posts)), 6) if posts else None,
    }


# exploration


def explained(pre: frozenset, post: frozenset, known: Sequence[GroundOperator]) -> bool:
    """Whether some known operator's effects turn ``pre`` into ``post``.

    Preconditions are deliberately ignored: under partial observability a
    familiar action (picking an unseen can) can fire without its visible
    preconditions, and that is not a new kind of change.
    """
    return any((pre - g.delete_effects) | g.add_effects == post for g in known)


def explore(env, detector, known: Sequence[GroundOperator], log_: TransitionLog, executor_id: str, cap: int,
            seed: int, curiosity: bool = True, eta: float = 0.1, epsilon: float = 0.1,
            gamma: float = 0.95, alpha: float = 0.5, episode_steps: int = 1000,
            should_stop: Optional[Callable[[], bool]] = None) -> Optional[int]:
    """Explores until a symbolic change no known operator explains; returns the steps it took, or None.

    With ``curiosity`` the behaviour policy is epsilon-greedy over an
    optimistically initialised table trained on intrinsic reward alone;
    otherwise actions are uniform random.
    """
    rng = np.random.default_rng(seed)
    n_actions = env.n_actions
    q = GoalConditionedQ(n_actions, initial_value=1.0)
    icm = CuriosityModel(len(env.reset(seed)), n_actions, eta=eta, seed=seed) if curiosity else None
    no_goal = frozenset()
    steps = 0
    while steps < cap:
        obs = env.reset(seed)
        state = detector(obs)
        for _ in range(episode_steps):
            if steps >= cap or (should_stop is not None and should_stop()):
                return None
            if icm is None or rng.random() < epsilon:
                action = int(rng.integers(n_actions))
            else:
                action = q.greedy(obs, no_goal)
            result = env.step(action)
            steps += 1
            nxt = result.observation
            post = detector(nxt)
            if icm is not None:
                r = icm.intrinsic_reward(obs, action, nxt)
                icm.update([(obs, action, nxt)])
                q_update(q, Transition(obs, action, r, nxt, result.terminated, no_goal), gamma, alpha)
            if post != state and not explained(state, post, known):
                record_transition(log_, state, post, executor_id)
                return steps
            if result.done:
                break
            obs, state = nxt, post
    return None


# the loop


def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", text).strip("_")


def load_problem(config: ExperimentConfig):
    dom_path = Path(config.domain) if config.domain else fixtures.DOMAIN_PATH
    prob_path = Path(config.problem) if config.problem else fixtures.PROBLEM_PATH
    for p in (dom_path, prob_path):
        if not p.exists():
            raise FixtureMissing(str(p))
    return fixtures.load_gridcan(dom_path, prob_path)


class AdaptationRun:
    """State of one seed's adaptation; :meth:`run` drives the loop."""

    def __init__(self, config: ExperimentConfig, seed: int, output_dir: Optional[Path] = None):
        self.config = config
        self.seed = int(seed)
        full_domain, task = load_problem(config)
        self.domain = full_domain.with_operators(
            [o for o in full_domain.operators if o.name not in set(config.withheld_operators)])
        self.goal = task.goal
        env = GridCan()
        self.baseline_env = env.clone()
        if config.scenario is not None:
            env.inject_novelty(fixtures.load_scenario(config.scenario))
        self.env = CountingEnv(env, config.max_adaptation_steps)
        self.detector = GridCanDetector()
        self.planner = Planner(self.goal)
        self.library = scripted_library(self.domain)
        self.log = TransitionLog()
        self.records: list[MetricsRecord] = []
        self.summary = RunSummary(self.seed, config.scenario, None, None)
        self.out = output_dir
        self.attempts: dict[GroundOperator, int] = {}
        self.curves: dict[str, list] = {}
        self.n_explorations = 0
        self._next_mark = config.eval_every
        self.exports: list[str] = []
        if self.out is not None:
            self.out.mkdir(parents=True, exist_ok=True)
            for stale in [*self.out.glob("curve-*.csv"), *self.out.glob("policies/*.nsaq")]:
                stale.unlink()

    # metrics

    def _phase(self, rate: float) -> str:
        return "converged" if rate >= self.config.convergence_threshold else "adapting"

    def record(self, rate: float, phase: Optional[str] = None) -> None:
        self.records.append(MetricsRecord(self.env.steps, rate, phase or self._phase(rate)))

    def evaluate(self, library: Optional[ExecutorLibrary] = None) -> float:
        return evaluate(self.env, self.detector, self.domain, self.planner, library or self.library,
                        self.config.eval_episodes, self.seed, self.config.max_replans)

    def _periodic(self, op: GroundOperator, candidate) -> None:
        """Full-pipeline evaluation with ``candidate`` in place, at every crossed eval mark."""
        if self.env.steps < self._next_mark:
            return
        lib = self.library.copy()
        lib.register(op, candidate, front=True)
        self.record(self.evaluate(lib))
        while self._next_mark <= self.env.steps:
            self._next_mark += self.config.eval_every

    def _stop(self) -> bool:
        return self.env.exhausted()

    # learning steps

    def _start_fn(self, op: GroundOperator) -> Callable:
        def start(env):
            att = run_pipeline(env, self.detector, self.domain, self.planner, self.library, self.seed,
                               False, self.config.max_replans, stop_before=op)
            return att.final_obs
        return start

    def _train(self, op: GroundOperator, kind: str, p: Optional[Plan]) -> None:
        n = self.attempts.get(op, 0)
        self.attempts[op] = n + 1
        budget = self.config.train_steps * (2 ** n)
        ex_id = f"{kind}-{op}-{n + 1}"
        ipt = IntegratedTask(self.planner.task(self.domain, frozenset()), self.env, self.detector, self.library)
        goal = op.add_effects
        start = self._start_fn(op)

        def evaluate_fn(candidate):
            self._periodic(op, candidate)
            return success_rate(candidate, self.env, self.detector, goal, start, self.config.eval_episodes)

        rm = reward_machine_from_plan(p) if p is not None else None
        if kind == "skill":
            failed = set(map(id, self.library.select_executors(op)))
            options = [e for e in self.library.executors() if id(e) not in failed]
            options += primitive_options(self.env.n_actions)
            spec = self.config.training_spec(budget, self.config.skill_budget, self.seed)
            ex, curve = train_skill_executor(spec, ipt, options, goal, rm, start, evaluate_fn, self._stop,
                                             operator=op, executor_id=ex_id)
        else:
            spec = self.config.training_spec(budget, self.config.control_budget, self.seed)
            ex, curve = train_control_executor(spec, ipt, goal, None, rm, start, evaluate_fn, self._stop,
                                               operator=op, executor_id=ex_id)
        self.library.register(op, ex, front=True)
        self.summary.learned_executors.append(ex_id)
        self.curves[ex_id] = curve
        if self.out is not None:
            pol = self.out / "policies"
            pol.mkdir(exist_ok=True)
            save_policy(ex, pol / f"{_slug(ex_id)}.nsaq")
            write_curve(curve, self.out / f"curve-{_slug(ex_id)}.csv")

    def _explore_and_merge(self) -> bool:
        self.n_explorations += 1
        ex_id = f"explore-{self.n_explorations}"
        known = self.planner.ground(self.domain)
        c = self.config
        found = explore(self.env, self.detector, known, self.log, ex_id, c.exploration_cap,
                        self.seed + self.n_explorations, c.curiosity, c.eta, c.exploration_epsilon,
                        c.gamma, c.alpha, should_stop=self._stop)
        if found is None:
            return False
        try:
            induced = induce_operator(self.log, ex_id, self.domain)
        except (InsufficientData, DegenerateOperator):
            return False
        ops = imagine_operators(self.domain, [induced])
        merged = merge_into_domain(self.domain, ops)
        added = [o.name for o in merged.operators[len(self.domain.operators):]]
        self.domain = merged
        self.summary.learned_operators.extend(added)
        self.exports.append(export_operators(ops))
        return bool(added)

    def _gap(self) -> tuple[Optional[GroundOperator], Optional[Plan]]:
        state = self.detector(self.env.reset(self.seed))
        p = self.planner(self.domain, state)
        if p is None:
            return None, None
        for op in p.steps:
            if not self.library.covered(op):
                return op, p
        return None, p

    def handle_failure(self, att: Attempt) -> bool:
        """Reacts to one failed attempt; False means the run cannot make further progress."""
        op = att.failed_op
        if att.reason == "no_executor" and op is not None:
            if self.attempts.get(op, 0) >= 2:
                return False
            self.summary.novelty_classes.append("global")
            self._train(op, "control", att.plan)
            return True
        if att.reason == "no_plan":
            novelty = "global"
        else:
            ipt = IntegratedTask(self.planner.task(self.domain, frozenset()), self.env, self.detector, self.library)
            outcome = att.outcome
            novelty = classify_novelty(ipt, outcome, self.library)
        self.summary.novelty_classes.append(novelty)
        if op is not None and self.attempts.get(op, 0) >= 2:
            return False  # retrained once with a doubled budget already
        if novelty == "local" and op is not None:
            self._train(op, "skill", att.plan)
            return True
        if att.reason == "no_plan" or op is None:
            if not self._explore_and_merge():
                return not self._stop()
        gap, p = self._gap()
        if gap is None and op is not None:
            gap, p = op, att.plan
        if gap is None:
            return not self._stop()
        self._train(gap, "control", p)
        return True

    def run(self) -> RunSummary:
        c = self.config
        if c.max_adaptation_steps > 0:
            base_lib = scripted_library(self.domain)
            rate = evaluate(self.baseline_env, self.detector, self.domain, self.planner, base_lib,
                            c.eval_episodes, self.seed, c.max_replans)
            self.records.append(MetricsRecord(0, rate, "baseline"))
        try:
            while not self.env.exhausted():
                att = run_pipeline(self.env, self.detector, self.domain, self.planner, self.library, self.seed,
                                   True, c.max_replans)
                if att.success:
                    rate = self.evaluate()
                    self.record(rate)
                    if rate >= c.convergence_threshold:
                        break
                    continue
                if not self.handle_failure(att):
                    break
        except StepLimitReached:
            pass
        return self.finish()

    def finish(self) -> RunSummary:
        s = self.summary
        s.t_adapt = compute_t_adapt(self.records, self.config.convergence_threshold)
        evals = [r for r in self.records if r.phase != "baseline"]
        s.post_success = evals[-1].eval_success_rate if evals else None
        s.total_steps = self.env.steps
        if self.out is not None:
            write_metrics(self.records, self.out / "metrics.csv")
            (self.out / "summary.json").write_text(json.dumps(s.to_json(), indent=2, sort_keys=True) + "\n")
            self.log.dump(self.out / "transitions.jsonl")
            (self.out / "domain.pddl").write_text(serialize_domain(self.domain))
            (self.out / "learned-operators.pddl").write_text("".join(self.exports))
        return s


def write_metrics(records: Sequence[MetricsRecord], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "success_rate", "phase"])
        for r in records:
            w.writerow([r.environment_step, f"{r.eval_success_rate:.6f}", r.phase])


def read_metrics(path: str | Path) -> list[MetricsRecord]:
    with open(path, newline="") as fh:
        return [MetricsRecord(int(r["step"]), float(r["success_rate"]), r["phase"]) for r in csv.DictReader(fh)]


def run_dir(config: ExperimentConfig, seed: int) -> Path:
    return Path(config.output_dir) / (config.scenario or "baseline") / f"seed-{seed}"


def run_adaptation(config: ExperimentConfig, seed: int, output_dir: Optional[Path] = None,
                   write: bool = True) -> RunSummary:
    out = (output_dir or run_dir(config, seed)) if write else None
    return AdaptationRun(config, seed, out).run()


def load_summaries(directory: str | Path) -> list[RunSummary]:
    paths = sorted(Path(directory).rglob("summary.json"))
    return [RunSummary.from_json(json.loads(p.read_text())) for p in paths]
