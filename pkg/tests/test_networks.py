import numpy as np
import pytest

from nsadapt.learning.curiosity import CuriosityModel, curiosity_update, intrinsic_reward
from nsadapt.learning.network import FeedForwardNet, ShapeMismatch, net_forward, net_gradient
from nsadapt.oracles import finite_difference


def straight_line_forward(net, x):
    h = np.asarray(x, dtype=float)
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = [sum(w[r, c] * h[c] for c in range(w.shape[1])) + b[r] for r in range(w.shape[0])]
        h = np.array(z) if i == net.n_layers - 1 else np.tanh(np.array(z))
    return h


def test_zero_network_outputs_zero():
    net = FeedForwardNet([3, 4, 2], init="zeros")
    np.testing.assert_array_equal(net_forward(net, [1.0, -2.0, 3.0]), [0.0, 0.0])


def test_identity_layer():
    net = FeedForwardNet.from_params([np.eye(3)], [np.zeros(3)])
    x = np.array([0.3, -1.0, 2.0])
    np.testing.assert_array_equal(net_forward(net, x), x)


def test_forward_matches_straight_line_oracle():
    rng = np.random.default_rng(0)
    for _ in range(5):
        net = FeedForwardNet([4, 5, 3, 2], rng)
        x = rng.normal(size=4)
        np.testing.assert_allclose(net_forward(net, x), straight_line_forward(net, x), atol=1e-12)


def test_zero_loss_gradient_gives_zero_gradients():
    net = FeedForwardNet([3, 4, 2], np.random.default_rng(1))
    gw, gb = net_gradient(net, np.ones(3), np.zeros(2))
    assert all(not g.any() for g in gw + gb)


def test_linear_layer_squared_loss_closed_form():
    rng = np.random.default_rng(2)
    w, b = rng.normal(size=(2, 3)), rng.normal(size=2)
    net = FeedForwardNet.from_params([w], [b])
    x, y = rng.normal(size=3), rng.normal(size=2)
    residual = net_forward(net, x) - y
    gw, gb = net_gradient(net, x, residual)
    np.testing.assert_allclose(gw[0], np.outer(residual, x), atol=1e-12)
    np.testing.assert_allclose(gb[0], residual, atol=1e-12)


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(3)
    net = FeedForwardNet([3, 4, 2], rng)
    x, y = rng.normal(size=3), rng.normal(size=2)

    def loss():
        r = net_forward(net, x) - y
        return 0.5 * float(r @ r)

    gw, gb = net_gradient(net, x, net_forward(net, x) - y)
    numerics = finite_difference(loss, net.weights + net.biases)
    for analytic, numeric in zip(gw + gb, numerics):
        rel = np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
        assert rel.max() < 1e-4


def test_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        FeedForwardNet([3])
    with pytest.raises(ShapeMismatch):
        FeedForwardNet.from_params([np.eye(3)], [np.zeros(2)])


# curiosity

S = np.array([0.1, 0.2, 0.3])
S2 = np.array([0.2, 0.2, 0.3])


def test_zero_model_zero_target_gives_zero_reward():
    cm = CuriosityModel(3, 2, init="zeros")
    assert intrinsic_reward(cm, S, 0, np.zeros(3)) == 0.0


def test_reward_is_non_negative_and_linear_in_eta():
    a = CuriosityModel(3, 2, eta=0.1, seed=4)
    b = CuriosityModel(3, 2, eta=0.2, seed=4)
    ra, rb = a.intrinsic_reward(S, 1, S2), b.intrinsic_reward(S, 1, S2)
    assert ra >= 0
    assert rb == pytest.approx(2 * ra)


def test_eta_validation():
    for eta in (0.0, -1.0, float("inf")):
        with pytest.raises(ValueError):
            CuriosityModel(3, 2, eta=eta)


def test_repeated_transition_reward_vanishes():
    cm = CuriosityModel(3, 2, seed=5)
    start = cm.intrinsic_reward(S, 1, S2)
    for _ in range(1000):
        cm.update([(S, 1, S2)])
    assert cm.intrinsic_reward(S, 1, S2) < 0.01 * start


def test_perfect_prediction_leaves_forward_model_unchanged():
    cm = CuriosityModel(3, 2, init="zeros")
    before = [w.copy() for w in cm.forward_model.weights]
    forward_loss, _ = curiosity_update(cm, [(S, 0, np.zeros(3))] * 4)
    assert forward_loss == 0.0
    for w0, w1 in zip(before, cm.forward_model.weights):
        np.testing.assert_array_equal(w0, w1)


def test_inverse_model_learns_four_transitions():
    cm = CuriosityModel(2, 4, learning_rate=0.1, seed=6)
    moves = {0: (0, -0.5), 1: (0, 0.5), 2: (-0.5, 0), 3: (0.5, 0)}
    start = np.array([0.5, 0.5])
    batch = [(start, a, start + np.array(d)) for a, d in moves.items()]
    for _ in range(2000):
        cm.update(batch)
        if cm.inverse_accuracy(batch) == 1.0:
            break
    assert cm.inverse_accuracy(batch) == 1.0


def test_forward_loss_decreases():
    cm = CuriosityModel(3, 2, seed=7)
    batch = [(S, 0, S2), (S2, 1, S)]
    first, _ = cm.update(batch)
    for _ in range(99):
        last, _ = cm.update(batch)
    assert last < first


def test_linear_feature_map_trains():
    cm = CuriosityModel(3, 2, feature="linear", feature_size=2, seed=8)
    p0 = cm.projection.copy()
    cm.update([(S, 0, S2)])
    assert cm.phi(S).shape == (2,)
    assert not np.array_equal(p0, cm.projection)


def test_empty_batch_rejected():
    with pytest.raises(ValueError):
        CuriosityModel(3, 2).update([])
