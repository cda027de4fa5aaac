"""Reward machines derived from plans: one machine state per plan boundary."""

from __future__ import annotations

from typing import Optional, Sequence

from ..symbolic import entails


class RewardMachine:
    """Advances past boundary ``k+1`` when the detected state entails that boundary's expected atoms.

    Each advance pays ``step_bonus`` except the last, which pays ``terminal_bonus``.
    """

    def __init__(self, boundaries: Sequence[frozenset], step_bonus: float = 0.1, terminal_bonus: float = 1.0):
        if not boundaries:
            raise ValueError("a reward machine needs at least the initial boundary")
        self.boundaries = [frozenset(b) for b in boundaries]
        self.step_bonus = float(step_bonus)
        self.terminal_bonus = float(terminal_bonus)
        self.current = 0

    @property
    def n_states(self) -> int:
        return len(self.boundaries)

    @property
    def terminal(self) -> bool:
        return self.current == self.n_states - 1

    def reset(self, state: Optional[frozenset] = None) -> None:
        """Back to state 0; with ``state``, silently skip boundaries it already entails."""
        self.current = 0
        if state is not None:
            while not self.terminal and entails(state, self.boundaries[self.current + 1]):
                self.current += 1

    def step(self, state: frozenset) -> float:
        reward = 0.0
        while not self.terminal and entails(state, self.boundaries[self.current + 1]):
            self.current += 1
            reward += self.terminal_bonus if self.terminal else self.step_bonus
        return reward

    def copy(self) -> RewardMachine:
        rm = RewardMachine(self.boundaries, self.step_bonus, self.terminal_bonus)
        rm.current = self.current
        return rm


def reward_machine_from_plan(p, step_bonus: float = 0.1, terminal_bonus: float = 1.0) -> RewardMachine:
    return RewardMachine(p.expected_states, step_bonus, terminal_bonus)
