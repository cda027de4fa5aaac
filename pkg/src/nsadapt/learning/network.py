"""Small feed-forward network with hand-written backpropagation (tanh hidden, linear output)."""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np


class ShapeMismatch(ValueError):
    pass


class FeedForwardNet:
    def __init__(self, sizes: Sequence[int], rng: Optional[np.random.Generator] = None, init: str = "random"):
        if len(sizes) < 2:
            raise ShapeMismatch("need at least input and output sizes")
        self.sizes = tuple(int(s) for s in sizes)
        rng = np.random.default_rng(0) if rng is None else rng
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for n_in, n_out in zip(self.sizes[:-1], self.sizes[1:]):
            if init == "zeros":
                w = np.zeros((n_out, n_in))
            else:
                w = rng.normal(0.0, 1.0 / np.sqrt(n_in), size=(n_out, n_in))
            self.weights.append(w)
            self.biases.append(np.zeros(n_out))

    @classmethod
    def from_params(cls, weights: Sequence[np.ndarray], biases: Sequence[np.ndarray]) -> FeedForwardNet:
        sizes = [weights[0].shape[1]] + [w.shape[0] for w in weights]
        net = cls(sizes, init="zeros")
        for i, (w, b) in enumerate(zip(weights, biases)):
            if w.shape != net.weights[i].shape or np.shape(b) != net.biases[i].shape:
                raise ShapeMismatch(f"layer {i}: inconsistent parameter shapes")
            net.weights[i] = np.array(w, dtype=float)
            net.biases[i] = np.array(b, dtype=float)
        return net

    def copy(self) -> FeedForwardNet:
        return FeedForwardNet.from_params([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def _as_batch(self, x) -> tuple[np.ndarray, bool]:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        x = x[None, :] if single else x
        if x.ndim != 2 or x.shape[1] != self.sizes[0]:
            raise ShapeMismatch(f"expected input width {self.sizes[0]}, got shape {x.shape}")
        return x, single

    def forward_cache(self, x) -> tuple[list[np.ndarray], np.ndarray]:
        """Returns the per-layer inputs (for backprop) and the output batch."""
        a, _ = self._as_batch(x)
        inputs = []
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            inputs.append(a)
            z = a @ w.T + b
            a = np.tanh(z) if i < self.n_layers - 1 else z
        return inputs, a

    def forward(self, x) -> np.ndarray:
        a, single = self._as_batch(x)
        _, out = self.forward_cache(a)
        return out[0] if single else out

    def backward(self, inputs: list[np.ndarray], output: np.ndarray, dout) -> tuple[list, list, np.ndarray]:
        """Gradients of sum(dout * output) w.r.t. weights, biases and the input batch."""
        delta = np.asarray(dout, dtype=float)
        delta = delta[None, :] if delta.ndim == 1 else delta
        if delta.shape != output.shape:
            raise ShapeMismatch(f"output gradient shape {delta.shape} != output shape {output.shape}")
        grads_w: list[np.ndarray] = [None] * self.n_layers
        grads_b: list[np.ndarray] = [None] * self.n_layers
        for i in reversed(range(self.n_layers)):
            a_in = inputs[i]
            grads_w[i] = delta.T @ a_in
            grads_b[i] = delta.sum(axis=0)
            delta = delta @ self.weights[i]
            if i > 0:
                delta = delta * (1.0 - a_in**2)  # a_in = tanh(z) of the previous layer
        return grads_w, grads_b, delta

    def sgd_step(self, grads_w, grads_b, lr: float) -> None:
        for i in range(self.n_layers):
            self.weights[i] -= lr * grads_w[i]
            self.biases[i] -= lr * grads_b[i]


def net_forward(net: FeedForwardNet, x) -> np.ndarray:
    return net.forward(x)


def net_gradient(net: FeedForwardNet, x, dout) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Exact gradients of ``dout . net(x)`` for every weight matrix and bias vector."""
    inputs, out = net.forward_cache(x)
    grads_w, grads_b, _ = net.backward(inputs, out, dout)
    return grads_w, grads_b
