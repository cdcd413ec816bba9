import math

import numpy as np
import pytest

from deepcva import nn
from deepcva.seeds import SeedBank


def _random_net(seed, input_dim=3, hidden=(5, 4), output_dim=2, output_activation="sigmoid"):
    cfg = nn.NetworkConfig(input_dim, hidden, output_dim, output_activation=output_activation)
    params = nn.init_params(cfg, np.random.default_rng(seed))
    return cfg, params


def test_zero_network_outputs_half():
    cfg = nn.NetworkConfig(2, (4,), 3, output_activation="sigmoid")
    params = nn.init_params(cfg, np.random.default_rng(0))
    for w in params.weights:
        w[:] = 0.0
    out = nn.forward(params, cfg, np.random.default_rng(1).normal(size=(6, 2)))
    np.testing.assert_allclose(out, 0.5)


def test_single_identity_layer_is_identity():
    cfg = nn.NetworkConfig(3, (), 3, output_activation="identity")
    params = nn.NetworkParams([np.eye(3)], [np.zeros(3)])
    x = np.random.default_rng(2).normal(size=(5, 3))
    np.testing.assert_allclose(nn.forward(params, cfg, x), x)


def test_hand_computed_2_2_1_network():
    cfg = nn.NetworkConfig(2, (2,), 1, hidden_activation="tanh", output_activation="sigmoid")
    w1 = np.array([[0.5, -1.0], [0.25, 0.75]])
    b1 = np.array([0.1, -0.2])
    w2 = np.array([[2.0], [-0.5]])
    b2 = np.array([0.3])
    params = nn.NetworkParams([w1, w2], [b1, b2])
    x = np.array([[1.0, 2.0]])
    h1 = math.tanh(1.0 * 0.5 + 2.0 * 0.25 + 0.1)
    h2 = math.tanh(1.0 * -1.0 + 2.0 * 0.75 - 0.2)
    z = 2.0 * h1 - 0.5 * h2 + 0.3
    expected = 1.0 / (1.0 + math.exp(-z))
    assert nn.forward(params, cfg, x)[0, 0] == pytest.approx(expected, rel=1e-12)


def test_round_off_threshold():
    assert nn.round_off(np.array([0.5])).all()
    np.testing.assert_array_equal(nn.round_off(np.array([0.4999, 0.5001])), [False, True])
    assert nn.round_off(np.full(4, 0.9)).all()


def _loss_and_numeric_grads(cfg, params, x, target, eps=1e-6):
    def loss_value():
        out = nn.forward(params, cfg, x)
        return float(np.sum((out - target) ** 2))

    numeric = []
    for w, b in zip(params.weights, params.biases):
        gw = np.zeros_like(w)
        for idx in np.ndindex(*w.shape):
            old = w[idx]
            w[idx] = old + eps
            up = loss_value()
            w[idx] = old - eps
            down = loss_value()
            w[idx] = old
            gw[idx] = (up - down) / (2 * eps)
        gb = np.zeros_like(b)
        for idx in np.ndindex(*b.shape):
            old = b[idx]
            b[idx] = old + eps
            up = loss_value()
            b[idx] = old - eps
            down = loss_value()
            b[idx] = old
            gb[idx] = (up - down) / (2 * eps)
        numeric.append((gw, gb))
    return numeric


@pytest.mark.parametrize("seed,output_activation", [(0, "sigmoid"), (1, "identity"), (2, "sigmoid"), (3, "identity")])
def test_backprop_matches_central_differences(seed, output_activation):
    cfg, params = _random_net(seed, output_activation=output_activation)
    rng = np.random.default_rng(seed + 100)
    x = rng.normal(size=(7, cfg.input_dim))
    target = rng.normal(size=(7, cfg.output_dim))
    out, acts = nn.forward_cached(params, cfg, x)
    analytic = nn.backward(params, cfg, acts, 2.0 * (out - target))
    numeric = _loss_and_numeric_grads(cfg, params, x, target)
    for (aw, ab), (nw, nb) in zip(analytic, numeric):
        scale = max(np.abs(nw).max(), 1e-8)
        assert np.max(np.abs(aw - nw)) / scale < 1e-5
        scale = max(np.abs(nb).max(), 1e-8)
        assert np.max(np.abs(ab - nb)) / scale < 1e-5


def test_adam_converges_on_quadratic_bowl():
    target = np.array([1.5, -2.0, 0.25])
    cfg = nn.NetworkConfig(1, (), 3, output_activation="identity")
    params = nn.NetworkParams([np.zeros((1, 3))], [np.random.default_rng(4).normal(size=3)])
    schedule = nn.TrainSchedule(batch_size=1, n_batches=5000, lr_start=1e-2, lr_end=1e-3, decay_every=1000)
    opt = nn.Adam(params, schedule)
    for step in range(5000):
        grads = [(np.zeros((1, 3)), 2.0 * (params.biases[0] - target))]
        opt.step(params, grads, schedule.lr(step))
        if np.sum((params.biases[0] - target) ** 2) < 1e-12:
            break
    assert np.linalg.norm(params.biases[0] - target) < 1e-6


def test_zero_gradient_leaves_params_unchanged():
    cfg, params = _random_net(5)
    before = params.copy()
    schedule = nn.TrainSchedule()
    opt = nn.Adam(params, schedule)
    grads = [(np.zeros_like(w), np.zeros_like(b)) for w, b in zip(params.weights, params.biases)]
    opt.step(params, grads, 1e-2)
    for w0, w1 in zip(before.weights, params.weights):
        np.testing.assert_array_equal(w0, w1)


def test_non_finite_gradient_aborts():
    cfg, params = _random_net(6)
    opt = nn.Adam(params, nn.TrainSchedule())
    grads = [(np.zeros_like(w), np.zeros_like(b)) for w, b in zip(params.weights, params.biases)]
    grads[0][0][0, 0] = np.nan
    with pytest.raises(FloatingPointError, match="non-finite gradient"):
        opt.step(params, grads, 1e-2)


def test_non_finite_loss_aborts():
    cfg, params = _random_net(7)
    x = np.zeros((8, cfg.input_dim))

    def loss_grad(rows, out):
        return np.inf, np.zeros_like(out)

    with pytest.raises(FloatingPointError, match="non-finite training loss"):
        nn.train_network(params, cfg, x, loss_grad, nn.TrainSchedule(batch_size=8, n_batches=1), np.random.default_rng(0))


@pytest.mark.parametrize("seed", range(5))
def test_decision_outputs_strictly_inside_unit_interval(seed):
    cfg, params = _random_net(seed, input_dim=4, hidden=(30, 30, 30), output_dim=6)
    x = np.random.default_rng(seed).normal(size=(64, 4))
    out = nn.forward(params, cfg, x)
    assert np.all(out > 0.0) and np.all(out < 1.0)


def test_training_is_bit_deterministic():
    def run():
        bank = SeedBank(77)
        cfg = nn.NetworkConfig(2, (8,), 1, output_activation="identity")
        params = nn.init_params(cfg, bank.generator("init"))
        rng = np.random.default_rng(3)
        x = rng.normal(size=(64, 2))
        y = (x[:, :1] * 2.0 - x[:, 1:] + 0.3)

        def loss_grad(rows, out):
            resid = out - y[rows]
            return float(np.mean(resid**2)), 2.0 * resid / rows.shape[0]

        nn.train_network(params, cfg, x, loss_grad, nn.TrainSchedule(batch_size=16, n_batches=50), bank.generator("shuffle"))
        return params

    p1, p2 = run(), run()
    for w1, w2 in zip(p1.weights, p2.weights):
        np.testing.assert_array_equal(w1, w2)


def test_pack_unpack_roundtrip():
    cfg, params = _random_net(8)
    scaler = nn.InputScaler(np.array([1.0, 2.0, 3.0]), np.array([1.0, 0.5, 2.0]))
    net = nn.TrainedNet(cfg, params, scaler, y_mean=np.array([0.5, -1.0]), y_scale=np.array([2.0, 3.0]))
    arrays = nn.pack_net(net, "p_")
    restored = nn.unpack_net(arrays, "p_")
    x = np.random.default_rng(9).normal(size=(5, 3))
    np.testing.assert_array_equal(net(x), restored(x))


def test_unpack_rejects_tampered_config():
    cfg, params = _random_net(10)
    net = nn.TrainedNet(cfg, params, nn.InputScaler.identity(3))
    arrays = nn.pack_net(net, "p_")
    meta = str(arrays["p_meta"]).replace('"hidden": [5, 4]', '"hidden": [5, 5]')
    arrays["p_meta"] = np.array(meta)
    with pytest.raises(ValueError):
        nn.unpack_net(arrays, "p_")


def test_schedule_learning_rate_steps():
    s = nn.TrainSchedule(batch_size=10, n_batches=600, lr_start=1e-2, lr_end=1e-6, decay_every=100)
    assert s.lr(0) == pytest.approx(1e-2)
    assert s.lr(99) == pytest.approx(1e-2)
    assert s.lr(100) < 1e-2
    assert s.lr(599) == pytest.approx(1e-6)
    # geometric: equal ratios between segments
    ratios = [s.lr(100 * (k + 1)) / s.lr(100 * k) for k in range(5)]
    np.testing.assert_allclose(ratios, ratios[0])


def test_schedule_validation():
    with pytest.raises(ValueError):
        nn.TrainSchedule(lr_start=1e-3, lr_end=1e-2)
    with pytest.raises(ValueError):
        nn.TrainSchedule(batch_size=0)
    s = nn.TrainSchedule(batch_size=7)
    with pytest.raises(ValueError, match="does not divide"):
        s.validate_for(20)
    s.validate_for(21)


def test_input_scaler_zero_variance_guard():
    x = np.ones((10, 2))
    x[:, 1] = np.arange(10)
    scaler = nn.InputScaler.fit(x)
    assert scaler.std[0] == 1.0
    out = scaler.apply(x)
    assert np.all(np.isfinite(out))


def test_forward_shape_mismatch_rejected():
    cfg, params = _random_net(11)
    with pytest.raises(ValueError, match="expected input"):
        nn.forward(params, cfg, np.zeros((4, cfg.input_dim + 1)))
