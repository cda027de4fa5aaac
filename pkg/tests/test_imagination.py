import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nsadapt import fixtures
from nsadapt.imagination import (
    DegenerateOperator,
    InducedOperator,
    InsufficientData,
    TransitionLog,
    export_operators,
    imagine_operators,
    imagined_only,
    induce_operator,
    merge_into_domain,
    record_transition,
)
from nsadapt.oracles import brute_force_bindings, random_executions
from nsadapt.planner import NoPlanFound, plan
from nsadapt.symbolic import Atom, LiftedOperator, UnknownEntity, ground_operators, parse_domain

FRUIT = parse_domain(
    "(define (domain fruit) (:types item place tool) (:constants apple orange - item shelf table - place"
    " knife spoon - tool) (:predicates (holding ?o - item) (on ?o - item ?p - place) (free)"
    " (cut ?o - item ?t - tool)))"
)


@pytest.fixture(scope="module")
def gridcan():
    return fixtures.load_gridcan()


def at(r):
    return Atom("at-agent", (r,))


def test_unchanged_transition_is_recorded_then_filtered(gridcan):
    domain, task = gridcan
    log = record_transition(TransitionLog(), task.initial, task.initial, "idle", {}, domain)
    assert len(log) == 1
    with pytest.raises(DegenerateOperator):
        induce_operator(log, "idle", domain)


def test_toggle_transition_under_exploration_id(gridcan):
    domain, task = gridcan
    pre = task.initial - {Atom("door-open")}
    log = record_transition(TransitionLog(), pre, task.initial, "explore-1", {}, domain)
    induced = induce_operator(log, "explore-1", domain)
    op = induced.operator
    assert op.name == "learned-explore-1" and op.parameters == ()
    assert op.add_effects == {Atom("door-open")} and op.delete_effects == frozenset()
    assert induced.support == 1


def test_log_preserves_order():
    log = TransitionLog()
    for i in range(100):
        record_transition(log, [], [Atom("p", (f"e{i}",))], "x")
    assert len(log) == 100
    assert [next(iter(e.post)).args[0] for e in log] == [f"e{i}" for i in range(100)]


def test_log_round_trip(tmp_path, gridcan):
    domain, task = gridcan
    log = record_transition(TransitionLog(), task.initial, task.initial - {Atom("light-on")}, "a", {"?r": "Q0"})
    log.dump(tmp_path / "t.jsonl")
    back = TransitionLog.load(tmp_path / "t.jsonl")
    assert list(back) == list(log)


def test_record_validates_against_domain(gridcan):
    domain, _ = gridcan
    with pytest.raises(UnknownEntity):
        record_transition(TransitionLog(), [], [at("Q9")], "x", None, domain)


def test_missing_executor_is_insufficient_data(gridcan):
    domain, _ = gridcan
    with pytest.raises(InsufficientData):
        induce_operator(TransitionLog(), "nobody", domain)


def test_single_goto_entry(gridcan):
    domain, _ = gridcan
    log = record_transition(TransitionLog(), [at("Q0"), Atom("light-on")], [at("Q1"), Atom("light-on")], "walk",
                            {"?from": "Q0", "?to": "Q1"}, domain)
    induced = induce_operator(log, "walk", domain)
    op = induced.operator
    assert Atom("at-agent", ("?from",)) in op.preconditions
    assert op.add_effects == {Atom("at-agent", ("?to",))}
    assert op.delete_effects == {Atom("at-agent", ("?from",))}
    assert induced.support == 1


def test_ground_truth_recovery(gridcan):
    domain, _ = gridcan
    ground = ground_operators(domain)
    rng = np.random.default_rng(11)
    for schema in domain.operators:
        log = TransitionLog()
        for pre, post, binding in random_executions(schema.name, ground, 50, rng):
            record_transition(log, pre, post, schema.name, binding, domain)
        assert induce_operator(log, schema.name, domain).operator.same_structure(schema)


def _pick_log(entities):
    log = TransitionLog()
    for o in entities:
        record_transition(log, [Atom("on", (o, "shelf")), Atom("free")], [Atom("holding", (o,))], "grab",
                          {"?o": o}, FRUIT)
    return log


def test_imagines_picking_an_orange():
    induced = induce_operator(_pick_log(["apple"]), "grab", FRUIT)
    imagined = imagined_only(imagine_operators(FRUIT, [induced]))
    assert [i.operator.add_effects for i in imagined] == [{Atom("holding", ("orange",))}]
    assert imagined[0].support == 0


def test_nothing_to_imagine_when_every_binding_was_seen():
    induced = induce_operator(_pick_log(["apple", "orange"]), "grab", FRUIT)
    assert imagined_only(imagine_operators(FRUIT, [induced])) == []


def test_imagined_count_matches_brute_force():
    log = record_transition(TransitionLog(), [Atom("free")], [Atom("cut", ("apple", "knife"))], "slice",
                            {"?o": "apple", "?t": "knife"}, FRUIT)
    induced = induce_operator(log, "slice", FRUIT)
    imagined = imagined_only(imagine_operators(FRUIT, [induced]))
    by_type = {t: FRUIT.entities_of(t) for t in FRUIT.types}
    every = brute_force_bindings(by_type, ["item", "tool"])
    assert len(imagined) == len(every) - 1 == 3
    assert all(i.observed_bindings[0] not in induced.observed_bindings for i in imagined)


def _toggle_ops(gridcan):
    domain, task = gridcan
    log = record_transition(TransitionLog(), task.initial - {Atom("door-open")}, task.initial, "explore-1", {}, domain)
    return imagine_operators(domain, [induce_operator(log, "explore-1", domain)])


def _no_toggle(domain):
    return domain.with_operators([o for o in domain.operators if o.name != "toggle-switch"])


def test_merge_empty_set_keeps_domain(gridcan):
    domain, _ = gridcan
    assert merge_into_domain(domain, []) is domain


def test_merged_toggle_enables_plan(gridcan):
    domain, task = gridcan
    closed = task.with_initial(task.initial - {Atom("door-open")})
    base = _no_toggle(domain)
    with pytest.raises(NoPlanFound):
        plan(closed.with_domain(base), ground_operators(base))
    merged = merge_into_domain(base, _toggle_ops(gridcan))
    p = plan(closed.with_domain(merged), ground_operators(merged))
    assert "learned-explore-1" in [op.name for op in p.steps]
    assert [o.name for o in base.operators] == ["goto", "pick", "place"]


def test_min_support_threshold(gridcan):
    domain = _no_toggle(gridcan[0])
    assert merge_into_domain(domain, _toggle_ops(gridcan), min_support=2) is domain


def test_merge_is_idempotent_and_renames(gridcan):
    domain = _no_toggle(gridcan[0])
    ops = _toggle_ops(gridcan)
    once = merge_into_domain(domain, ops)
    assert merge_into_domain(once, ops) is once
    light = LiftedOperator("x", (), frozenset(), frozenset({Atom("light-on")}), frozenset())
    other = [InducedOperator(light, 1, False, "explore-1")]
    twice = merge_into_domain(once, other)
    assert [o.name for o in twice.operators][-2:] == ["learned-explore-1", "learned-explore-1-2"]


def test_export_annotates_support(gridcan):
    text = export_operators(_toggle_ops(gridcan))
    assert "; explore-1: support 1" in text
    assert "(:action learned-explore-1" in text


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_more_evidence_never_grows_effects(seed):
    domain, _ = fixtures.load_gridcan()
    rng = np.random.default_rng(seed)
    ground = ground_operators(domain)
    name = rng.choice([o.name for o in domain.operators])
    runs = random_executions(str(name), ground, 6, rng)
    log = TransitionLog()
    previous = None
    for pre, post, binding in runs:
        record_transition(log, pre, post, "x", binding, domain)
        op = induce_operator(log, "x", domain).operator
        if previous is not None:
            assert op.add_effects <= previous.add_effects
            assert op.delete_effects <= previous.delete_effects
        previous = op
