from dataclasses import replace

import pytest

from nsadapt import fixtures
from nsadapt.executors import (
    BUDGET_EXHAUSTED,
    DEAD_END,
    PRECONDITION_VIOLATION,
    EmptyOptionSet,
    Executor,
    ExecutorLibrary,
    PlanOutcome,
    compose_skill,
    classify_novelty,
    execute_plan,
    primitive_options,
    run_executor,
    scripted_executor,
    scripted_library,
)
from nsadapt.planner import Plan, plan
from nsadapt.symbolic import Atom, ground_operators
from nsadapt.world import DEFAULT_LAYOUT, GridCan, GridCanDetector, IntegratedTask, bfs_path

DETECT = GridCanDetector()


@pytest.fixture(scope="module")
def domain():
    full, _ = fixtures.load_gridcan()
    return full.with_operators([o for o in full.operators if o.name != "toggle-switch"])


@pytest.fixture(scope="module")
def task(domain):
    _, t = fixtures.load_gridcan()
    return t.with_domain(domain)


def op_named(domain, text):
    return next(g for g in ground_operators(domain) if str(g) == text)


def ipt_for(task, scenario=None):
    env = GridCan()
    if scenario:
        env.inject_novelty(fixtures.load_scenario(scenario))
    return IntegratedTask(task, env, DETECT, scripted_library(task.domain))


def test_library_ordering(domain):
    lib = ExecutorLibrary()
    op = op_named(domain, "goto(Q0,Q1)")
    assert lib.select_executors(op) == []
    a = scripted_executor(op)
    lib.register(op, a)
    assert lib.select_executors(op) == [a]
    b = scripted_executor(op)
    lib.register(op, b, front=False)
    lib.record_result(op, a, False)
    lib.record_result(op, b, True)
    assert lib.select_executors(op) == [b, a]


def test_library_copy_is_independent(domain):
    lib = scripted_library(domain)
    op = op_named(domain, "goto(Q0,Q1)")
    copy = lib.copy()
    copy.register(op, scripted_executor(op))
    assert len(lib.select_executors(op)) == 1
    assert len(copy.select_executors(op)) == 2


def test_termination_already_true(domain):
    env = GridCan()
    obs = env.reset(0)
    ex = Executor("noop", "control", frozenset(), frozenset({Atom("light-on")}), None)
    out = run_executor(ex, env, DETECT, obs)
    assert out.success and out.steps_used == 0


def test_precondition_violation(domain):
    env = GridCan()
    ex = scripted_executor(op_named(domain, "pick(can,Q1)"))
    assert run_executor(ex, env, DETECT, env.reset(0)).status == PRECONDITION_VIOLATION


def test_scripted_goto_uses_bfs_distance(domain):
    env = GridCan()
    out = run_executor(scripted_executor(op_named(domain, "goto(Q0,Q1)")), env, DETECT, env.reset(0))
    L = DEFAULT_LAYOUT
    assert out.success
    assert out.steps_used == len(bfs_path(L, L.agent_start, L.cells_of(1)))


def test_goto_across_sealed_door_exhausts_budget(domain):
    env = GridCan().inject_novelty(fixtures.load_scenario("door"))
    obs = env.reset(0)
    obs = run_executor(scripted_executor(op_named(domain, "goto(Q0,Q1)")), env, DETECT, obs).final_obs
    out = run_executor(scripted_executor(op_named(domain, "goto(Q1,Q3)")), env, DETECT, obs)
    assert out.status == BUDGET_EXHAUSTED


def test_empty_plan_on_satisfied_goal(task):
    ipt = ipt_for(replace(task, goal=frozenset({Atom("light-on")})))
    out = execute_plan(ipt, Plan((), (ipt.task.initial,)), ipt.environment.reset(0))
    assert out.success and out.executed == 0


def test_baseline_plan_executes(task):
    ipt = ipt_for(task)
    out = execute_plan(ipt, plan(task, ground_operators(task.domain)), ipt.environment.reset(0))
    assert out.success and out.executed == 4


def test_door_fails_at_crossing(task):
    ipt = ipt_for(task, "door")
    p = plan(task, ground_operators(task.domain))
    out = execute_plan(ipt, p, ipt.environment.reset(0))
    assert not out.success
    assert str(p.steps[out.step_index]) == "goto(Q1,Q3)"
    assert classify_novelty(ipt, out) == "global"


def test_obstacle_is_local(task):
    ipt = ipt_for(task, "obstacle")
    failure = PlanOutcome(False, "executors_failed", 0, None, ipt.environment.reset(0))
    assert classify_novelty(ipt, failure) == "local"


def test_goal_already_true_is_local(task):
    ipt = ipt_for(task)
    env = ipt.environment
    obs = env.reset(0)
    for a in bfs_path(DEFAULT_LAYOUT, (0, 0), [(2, 2)]) + [4] + bfs_path(DEFAULT_LAYOUT, (2, 2), [(6, 6)]) + [5]:
        obs = env.step(a).observation
    assert classify_novelty(ipt, PlanOutcome(False, "goal_not_reached", 4, None, obs)) == "local"


def test_singleton_skill_matches_option(domain):
    opt = scripted_executor(op_named(domain, "goto(Q0,Q1)"))
    skill = compose_skill([opt], opt.initiation, opt.termination)
    a, b = GridCan(), GridCan()
    o1 = run_executor(opt, a, DETECT, a.reset(0))
    o2 = run_executor(skill, b, DETECT, b.reset(0))
    assert o1.status == o2.status and o1.steps_used == o2.steps_used
    assert [s.action for s in o1.trace] == [s.action for s in o2.trace]


def test_goto_then_pick_skill_holds_can(domain):
    opts = [scripted_executor(op_named(domain, "goto(Q0,Q1)")), scripted_executor(op_named(domain, "pick(can,Q1)"))]
    skill = compose_skill(opts, frozenset({Atom("at-agent", ("Q0",))}), frozenset({Atom("holding", ("can",))}))
    env = GridCan()
    out = run_executor(skill, env, DETECT, env.reset(0))
    assert out.success and Atom("holding", ("can",)) in out.final_symbolic


def test_unreachable_skill_fails(domain):
    opts = [scripted_executor(op_named(domain, "goto(Q0,Q1)"))]
    skill = compose_skill(opts, frozenset(), frozenset({Atom("in", ("can", "bin"))}))
    env = GridCan()
    out = run_executor(skill, env, DETECT, env.reset(0))
    assert out.status in (DEAD_END, BUDGET_EXHAUSTED)


def test_empty_option_set():
    with pytest.raises(EmptyOptionSet):
        compose_skill([], frozenset(), frozenset())


def test_primitive_options_spend_one_step():
    env = GridCan()
    obs = env.reset(0)
    for opt in primitive_options():
        out = run_executor(opt, env, DETECT, obs)
        assert out.steps_used == 1 and out.success
        obs = out.final_obs


def test_executor_validation():
    with pytest.raises(ValueError):
        Executor("x", "reflex", frozenset(), frozenset(), None)
    with pytest.raises(ValueError):
        Executor("x", "control", frozenset(), frozenset(), None, 0)
