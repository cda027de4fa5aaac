"""Intrinsic curiosity: forward/inverse dynamics over a feature map, prediction error as reward."""

from __future__ import annotations

from typing import Iterable, Optional

import numpy as np

from .network import FeedForwardNet


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


class CuriosityModel:
    """Feature encoder plus forward and inverse models.

    ``feature="identity"`` uses the observation itself; ``"linear"`` learns a
    projection trained only through the inverse loss.
    """

    def __init__(self, obs_size: int, n_actions: int, hidden: int = 32, eta: float = 0.1,
                 learning_rate: float = 1e-2, feature: str = "identity", feature_size: Optional[int] = None,
                 seed: int = 0, init: str = "random"):
        if eta <= 0 or not np.isfinite(eta):
            raise ValueError("eta must be a positive finite number")
        if learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        rng = np.random.default_rng(seed)
        self.obs_size = obs_size
        self.n_actions = n_actions
        self.eta = float(eta)
        self.learning_rate = float(learning_rate)
        self.feature = feature
        if feature == "identity":
            self.feature_size = obs_size
            self.projection = None
        elif feature == "linear":
            self.feature_size = feature_size or obs_size
            self.projection = rng.normal(0.0, 1.0 / np.sqrt(obs_size), size=(self.feature_size, obs_size))
        else:
            raise ValueError(f"unknown feature map {feature!r}")
        f = self.feature_size
        self.forward_model = FeedForwardNet([f + n_actions, hidden, f], rng, init)
        self.inverse_model = FeedForwardNet([2 * f, hidden, n_actions], rng, init)

    def phi(self, obs) -> np.ndarray:
        obs = np.asarray(obs, dtype=float)
        return obs if self.projection is None else obs @ self.projection.T

    def one_hot(self, actions) -> np.ndarray:
        actions = np.atleast_1d(np.asarray(actions, dtype=int))
        out = np.zeros((len(actions), self.n_actions))
        out[np.arange(len(actions)), actions] = 1.0
        return out

    def predict_next(self, obs, action) -> np.ndarray:
        x = np.concatenate([np.atleast_2d(self.phi(obs)), self.one_hot(action)], axis=1)
        return self.forward_model.forward(x)

    def intrinsic_reward(self, obs, action: int, next_obs) -> float:
        err = self.predict_next(obs, action)[0] - self.phi(next_obs)
        return 0.5 * self.eta * float(err @ err)

    def update(self, batch: Iterable[tuple]) -> tuple[float, float]:
        batch = list(batch)
        if not batch:
            raise ValueError("empty batch")
        s = np.array([b[0] for b in batch], dtype=float)
        a = np.array([b[1] for b in batch], dtype=int)
        s2 = np.array([b[2] for b in batch], dtype=float)
        n = len(batch)
        f, f2 = self.phi(s), self.phi(s2)
        onehot = self.one_hot(a)

        fwd_in = np.concatenate([f, onehot], axis=1)
        fwd_cache, pred = self.forward_model.forward_cache(fwd_in)
        err = pred - f2
        forward_loss = 0.5 * float((err**2).sum()) / n

        inv_in = np.concatenate([f, f2], axis=1)
        inv_cache, logits = self.inverse_model.forward_cache(inv_in)
        probs = _softmax(logits)
        inverse_loss = float(-np.log(probs[np.arange(n), a] + 1e-300).mean())

        gw_f, gb_f, _ = self.forward_model.backward(fwd_cache, pred, err / n)
        gw_i, gb_i, d_inv_in = self.inverse_model.backward(inv_cache, logits, (probs - onehot) / n)
        self.forward_model.sgd_step(gw_f, gb_f, self.learning_rate)
        self.inverse_model.sgd_step(gw_i, gb_i, self.learning_rate)
        if self.projection is not None:
            k = self.feature_size
            grad_p = d_inv_in[:, :k].T @ s + d_inv_in[:, k:].T @ s2
            self.projection -= self.learning_rate * grad_p
        return forward_loss, inverse_loss

    def inverse_accuracy(self, batch: Iterable[tuple]) -> float:
        batch = list(batch)
        s = np.array([b[0] for b in batch], dtype=float)
        a = np.array([b[1] for b in batch], dtype=int)
        s2 = np.array([b[2] for b in batch], dtype=float)
        logits = self.inverse_model.forward(np.concatenate([self.phi(s), self.phi(s2)], axis=1))
        return float((logits.argmax(axis=1) == a).mean())


def intrinsic_reward(curiosity: CuriosityModel, obs, action: int, next_obs) -> float:
    return curiosity.intrinsic_reward(obs, action, next_obs)


def curiosity_update(curiosity: CuriosityModel, batch) -> tuple[float, float]:
    """One SGD step on both models; returns the pre-update (forward, inverse) losses."""
    return curiosity.update(batch)
