import struct
from pathlib import Path

import numpy as np
import pytest

from nsadapt import fixtures
from nsadapt.learning.her import achieved_goal, her_relabel
from nsadapt.learning.qlearning import GoalConditionedQ, Transition, goal_key, q_update
from nsadapt.learning.reward_machine import RewardMachine, reward_machine_from_plan
from nsadapt.oracles import value_iteration
from nsadapt.planner import plan
from nsadapt.symbolic import Atom, ground_operators
from nsadapt.world import PICK, RIGHT, GridCan, GridCanDetector

DATA = Path(__file__).parent / "data"
GOAL = frozenset({Atom("holding", ("can",))})


def test_zero_reward_terminal_stays_zero():
    q = GoalConditionedQ(2)
    q_update(q, Transition(0, 1, 0.0, 1, True, GOAL), 0.9, 0.5)
    assert q.values(0, GOAL).tolist() == [0.0, 0.0]


def test_single_rewarding_update():
    q = GoalConditionedQ(2)
    q_update(q, Transition(0, 1, 1.0, 1, True, GOAL), 0.9, 0.5)
    assert q.values(0, GOAL)[1] == 0.5


def test_alpha_validation():
    with pytest.raises(ValueError):
        q_update(GoalConditionedQ(2), Transition(0, 0, 0.0, 1, True), 0.9, 0.0)


def test_option_duration_discounts_bootstrap():
    q = GoalConditionedQ(1)
    q.row(1, GOAL)[0] = 1.0
    q_update(q, Transition(0, 0, 0.0, 1, False, GOAL, duration=3), 0.5, 1.0)
    assert q.values(0, GOAL)[0] == pytest.approx(0.125)


def test_two_state_chain_matches_value_iteration():
    gamma = 0.9
    # state 0 --a0--> state 1 --a0--> terminal (reward 1); action 1 stays put
    nxt = {(0, 0): 1, (0, 1): 0, (1, 0): 2, (1, 1): 1}
    rew = {(1, 0): 1.0}
    q = GoalConditionedQ(2)
    for _ in range(200):
        for (s, a), s2 in nxt.items():
            q_update(q, Transition(s, a, rew.get((s, a), 0.0), s2, s2 == 2, GOAL), gamma, 0.5)
    trans = [[nxt[(s, a)] for a in (0, 1)] for s in (0, 1)]
    reward = [[rew.get((s, a), 0.0) for a in (0, 1)] for s in (0, 1)]
    done = [[nxt[(s, a)] == 2 for a in (0, 1)] for s in (0, 1)]
    oracle = value_iteration(2, 2, trans, reward, done, gamma)
    for s in (0, 1):
        np.testing.assert_allclose(q.values(s, GOAL), oracle[s], atol=1e-6)
    assert q.values(0, GOAL)[0] == pytest.approx(gamma, abs=1e-6)


def test_greedy_breaks_ties_low_and_respects_mask():
    q = GoalConditionedQ(3)
    assert q.greedy(0, GOAL) == 0
    assert q.greedy(0, GOAL, np.array([False, True, True])) == 1


def _sample_table():
    q = GoalConditionedQ(3)
    q.row((1, 2), GOAL)[:] = [0.5, -1.0, 2.25]
    q.row((0, 0), frozenset())[:] = [1.0, 0.0, 0.0]
    return q


def test_artifact_layout_by_hand():
    data = _sample_table().to_bytes()
    head = b"NSAQ" + struct.pack("<III", 1, 3, 2)
    row0 = struct.pack("<I2q", 2, 0, 0) + struct.pack("<I", 0) + struct.pack("<3d", 1.0, 0.0, 0.0)
    gk = goal_key(GOAL).encode()
    row1 = struct.pack("<I2q", 2, 1, 2) + struct.pack("<I", len(gk)) + gk + struct.pack("<3d", 0.5, -1.0, 2.25)
    assert data == head + row0 + row1


def test_artifact_matches_golden_file():
    assert _sample_table().to_bytes() == (DATA / "golden-policy.nsaq").read_bytes()


def test_artifact_round_trip(tmp_path):
    q = _sample_table()
    q.save(tmp_path / "p.nsaq")
    back = GoalConditionedQ.load(tmp_path / "p.nsaq")
    assert back.to_bytes() == q.to_bytes()
    np.testing.assert_array_equal(back.values((1, 2), GOAL), [0.5, -1.0, 2.25])


def test_artifact_rejects_garbage():
    with pytest.raises(ValueError):
        GoalConditionedQ.from_bytes(b"XXXX" + bytes(12))


# hindsight relabeling


def _walk(actions, goal):
    env = GridCan()
    obs = env.reset(0)
    episode = []
    for a in actions:
        r = env.step(a)
        episode.append(Transition(obs, a, 0.0, r.observation, False, goal))
        obs = r.observation
    return episode


def test_self_relabel_keeps_goal_and_rewards():
    goal = frozenset({Atom("at-agent", ("Q1",))})
    episode = _walk([RIGHT, RIGHT], goal)
    episode[-1] = Transition(episode[-1].obs, RIGHT, 1.0, episode[-1].next_obs, True, goal)
    out = her_relabel(episode, GridCanDetector(), "final")
    relabeled = out[len(episode):]
    assert all(t.goal == goal for t in relabeled)
    assert [t.reward for t in relabeled] == [t.reward for t in episode]


def test_failed_pick_relabels_to_reached_region():
    episode = _walk([RIGHT, RIGHT, PICK], GOAL)
    out = her_relabel(episode, GridCanDetector(), "final", goal_predicates={"at-agent"})
    relabeled = out[len(episode):]
    assert all(t.goal == {Atom("at-agent", ("Q1",))} for t in relabeled)
    assert [t.reward for t in relabeled] == [0.0, 1.0, 1.0]
    assert [t.done for t in relabeled] == [False, True, True]


def test_future_zero_is_identity():
    episode = _walk([RIGHT, RIGHT], GOAL)
    assert her_relabel(episode, GridCanDetector(), "future-k", k=0) == episode


def test_future_k_adds_at_most_k_per_step():
    episode = _walk([RIGHT, RIGHT, RIGHT], GOAL)
    out = her_relabel(episode, GridCanDetector(), "future-k", k=2, goal_predicates={"at-agent"},
                      rng=np.random.default_rng(0))
    assert len(out) == len(episode) + 2 * len(episode)


def test_her_errors():
    with pytest.raises(ValueError):
        her_relabel([], GridCanDetector())
    with pytest.raises(ValueError):
        her_relabel(_walk([RIGHT], GOAL), GridCanDetector(), "episode")


def test_achieved_goal_projection():
    s = frozenset({Atom("at-agent", ("Q0",)), Atom("light-on")})
    assert achieved_goal(s, {"at-agent"}) == {Atom("at-agent", ("Q0",))}


# reward machines


def test_empty_plan_machine_is_terminal():
    rm = RewardMachine([frozenset()])
    assert rm.terminal and rm.step(frozenset()) == 0.0


def test_baseline_plan_machine_pays_shaping_then_terminal():
    domain, task = fixtures.load_gridcan()
    p = plan(task, ground_operators(domain))
    rm = reward_machine_from_plan(p)
    rm.reset(p.expected_states[0])
    total = sum(rm.step(s) for s in p.expected_states[1:])
    assert rm.n_states == 5 and rm.terminal
    assert total == pytest.approx(3 * 0.1 + 1.0)


def test_stuck_machine_pays_nothing():
    domain, task = fixtures.load_gridcan()
    rm = reward_machine_from_plan(plan(task, ground_operators(domain)))
    rm.reset(task.initial)
    assert sum(rm.step(task.initial) for _ in range(10)) == 0.0
    assert rm.current == 0


def test_reward_machine_copy_is_independent():
    rm = RewardMachine([frozenset(), frozenset({Atom("a")})])
    c = rm.copy()
    c.step(frozenset({Atom("a")}))
    assert c.terminal and not rm.terminal
