import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nsadapt import fixtures
from nsadapt.generators import random_domain, random_state
from nsadapt.oracles import brute_force_bindings
from nsadapt.symbolic import (
    Atom,
    DuplicateName,
    LiftedOperator,
    ParseError,
    TypingError,
    UnknownEntity,
    applicable,
    apply,
    entails,
    ground_operators,
    parse_domain,
    parse_problem,
    serialize_domain,
    serialize_problem,
)

MINIMAL = "(define (domain tiny) (:types thing) (:predicates (flag)))"


@pytest.fixture(scope="module")
def gridcan():
    return fixtures.load_gridcan()


def test_minimal_domain_has_no_operators():
    d = parse_domain(MINIMAL)
    assert d.operators == ()
    assert d.types == ("thing",)


def test_gridcan_domain_has_four_operators(gridcan):
    domain, _ = gridcan
    assert [o.name for o in domain.operators] == ["goto", "pick", "place", "toggle-switch"]


def test_wrong_arity_in_precondition_is_a_type_error():
    text = fixtures.DOMAIN_PATH.read_text().replace("(and (holding ?o) (at-agent ?r)", "(and (holding ?o ?r) (at-agent ?r)")
    with pytest.raises(TypeError):
        parse_domain(text)


def test_syntax_error_reports_position():
    with pytest.raises(ParseError) as info:
        parse_domain("(define (domain broken)\n  (:types a)\n  (:predicates (p ?x - a))")
    assert info.value.line >= 1


def test_undeclared_type_rejected():
    with pytest.raises(TypingError):
        parse_domain("(define (domain d) (:types a) (:predicates (p ?x - b)))")


def test_duplicate_operator_rejected():
    act = "(:action op :parameters () :precondition (flag) :effect (not (flag)))"
    with pytest.raises(DuplicateName):
        parse_domain(f"(define (domain d) (:predicates (flag)) {act} {act})")


def test_empty_goal_is_vacuous(gridcan):
    domain, _ = gridcan
    task = parse_problem("(define (problem p) (:domain gridcan) (:init (at-agent Q0)) (:goal (and)))", domain)
    assert task.goal == frozenset()
    assert entails(frozenset(), task.goal)


def test_baseline_problem_goal(gridcan):
    _, task = gridcan
    assert task.goal == {Atom("in", ("can", "bin"))}


def test_unknown_entity_in_problem(gridcan):
    domain, _ = gridcan
    with pytest.raises(UnknownEntity):
        parse_problem("(define (problem p) (:domain gridcan) (:init (at-agent Q9)) (:goal (light-on)))", domain)


def test_grounding_counts():
    d = parse_domain(
        "(define (domain d) (:types a b) (:constants x y z - a u v - b)"
        " (:predicates (p ?x - a ?y - b) (flag))"
        " (:action nullary :parameters () :precondition (flag) :effect (not (flag)))"
        " (:action pair :parameters (?x - a ?y - b) :precondition (flag) :effect (p ?x ?y)))"
    )
    names = [g.name for g in ground_operators(d)]
    assert names.count("nullary") == 1
    assert names.count("pair") == 6


def test_gridcan_grounding_matches_brute_force(gridcan):
    domain, _ = gridcan
    by_type = {t: domain.entities_of(t) for t in domain.types}
    expected = sum(len(brute_force_bindings(by_type, [t for _, t in op.parameters])) for op in domain.operators)
    assert len(ground_operators(domain)) == expected


def _ground(domain, text):
    return next(g for g in ground_operators(domain) if str(g) == text)


def test_pick_applicable_only_when_colocated(gridcan):
    domain, task = gridcan
    pick = _ground(domain, "pick(can,Q1)")
    assert not applicable(task.initial, pick)
    moved = apply(task.initial, _ground(domain, "goto(Q0,Q1)"))
    assert applicable(moved, pick)


def test_empty_preconditions_always_applicable(gridcan):
    domain, task = gridcan
    op = LiftedOperator("noop", (), frozenset(), frozenset(), frozenset())
    g = ground_operators(domain.with_operators([op]))[0]
    assert applicable(frozenset(), g)
    assert apply(task.initial, g) == task.initial


def test_inverse_operator_restores_state(gridcan):
    domain, task = gridcan
    there = _ground(domain, "goto(Q0,Q1)")
    back = _ground(domain, "goto(Q1,Q0)")
    assert apply(apply(task.initial, there), back) == task.initial


def test_entails_basic(gridcan):
    _, task = gridcan
    s = task.initial
    assert entails(s, set())
    assert entails(s, s)
    assert not entails(s, set(s) | {Atom("holding", ("can",))})


def test_apply_matches_set_algebra_on_random_pairs():
    rng = np.random.default_rng(7)
    checked = 0
    while checked < 1000:
        d = random_domain(rng)
        ops = ground_operators(d)
        if not ops:
            continue
        for _ in range(20):
            s = random_state(rng, d)
            g = ops[int(rng.integers(len(ops)))]
            if not applicable(s, g):
                s = s | g.preconditions
            expected = (set(s) - set(g.delete_effects)) | set(g.add_effects)
            assert apply(s, g) == frozenset(expected)
            checked += 1


def test_gridcan_round_trip(gridcan):
    domain, task = gridcan
    again = parse_domain(serialize_domain(domain))
    assert again == domain
    assert parse_problem(serialize_problem(task), again) == task


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_random_domain_round_trip(seed):
    d = random_domain(np.random.default_rng(seed))
    assert parse_domain(serialize_domain(d)) == d
