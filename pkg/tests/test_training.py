import numpy as np
import pytest
from dataclasses import replace

from crkan.errors import DivergedError
from crkan.model import KanNetwork, MlpNetwork
from crkan.rng import Rng
from crkan.systems import field_fn, make_system
from crkan.training import (AdamState, TrainConfig, adam_step, clip_gradient, cr_loss,
                            fine_tune, inject_noise, mse_loss, parameter_gradient,
                            train, trajectory_gradient, trajectory_loss, warmup_weight)


def test_mse_examples():
    assert mse_loss([[1.0, 2.0]], [[1.0, 2.0]]) == 0.0
    assert mse_loss([[1.0, 0.0]], [[0.0, 0.0]]) == 1.0
    # two samples with errors (1,0) and (0,2): (1 + 4) / 2
    pred = [[1.0, 0.0], [0.0, 2.0]]
    target = [[0.0, 0.0], [0.0, 0.0]]
    assert mse_loss(pred, target) == pytest.approx(2.5, abs=1e-15)


def _jac(u_x, u_y, v_x, v_y):
    return np.array([[[u_x, u_y], [v_x, v_y]]])


def test_cr_loss_examples():
    # f(z) = z^2 at z = x+iy has u_x = 2x = v_y, u_y = -2y = -v_x
    x, y = 0.7, -1.3
    holo = _jac(2 * x, -2 * y, 2 * y, 2 * x)
    assert cr_loss(holo) == 0.0
    conj = _jac(1.0, 0.0, 0.0, -1.0)
    assert cr_loss(conj) == 4.0
    mixed = np.concatenate([holo, conj])
    assert cr_loss(mixed) == 2.0


def test_warmup_schedule():
    cfg = TrainConfig()
    assert warmup_weight(0, cfg) == 0.0
    assert warmup_weight(50, cfg) == pytest.approx(0.25)
    assert warmup_weight(1000, cfg) == 0.5
    vals = [warmup_weight(s, cfg) for s in range(0, 300)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))
    assert vals[100] == cfg.lambda_max


def test_clip_gradient():
    g = np.array([0.3, -0.4])
    assert clip_gradient(g, 1.0) is g  # untouched below the threshold
    clipped = clip_gradient(np.array([3.0, 4.0]), 1.0)
    assert np.allclose(clipped, [0.6, 0.8])
    r = Rng(1)
    for _ in range(20):
        v = r.normal(17, sigma=5.0)
        assert np.linalg.norm(clip_gradient(v, 1.0)) <= 1.0 + 1e-12


def test_adam_step_basics():
    state = AdamState.for_parameters(3)
    params = np.array([1.0, 2.0, 3.0])
    out = adam_step(state, params, np.zeros(3), lr=0.1)
    assert np.array_equal(out, params)

    # fresh state, nonzero scalar gradient: first update is -lr * sign(g)
    state = AdamState.for_parameters(1)
    out = adam_step(state, np.array([0.0]), np.array([0.37]), lr=0.01)
    assert abs(out[0] - (-0.01)) < 0.01 * 1e-6

    s1, s2 = AdamState.for_parameters(2), AdamState.for_parameters(2)
    g = np.array([0.5, -1.5])
    a = adam_step(s1, np.zeros(2), g, lr=0.01)
    b = adam_step(s2, np.zeros(2), g, lr=0.01)
    assert np.array_equal(a, b)


def test_inject_noise():
    targets = Rng(5).normal(2000).reshape(1000, 2) * np.array([3.0, 0.5])
    assert inject_noise(targets, 0.0, seed=1) is targets

    big = Rng(6).normal(200000).reshape(100000, 2) * np.array([3.0, 0.5])
    noisy = inject_noise(big, 0.1, seed=2)
    rms = np.sqrt(np.mean(big ** 2, axis=0))
    got = (noisy - big).std(axis=0)
    assert np.all(np.abs(got - 0.1 * rms) < 0.05 * 0.1 * rms)

    assert np.array_equal(inject_noise(big, 0.1, seed=2), noisy)


def test_gradient_zero_at_exact_fit():
    net = KanNetwork.create(seed=0)
    for layer in (net.layer1, net.layer2):
        layer.coef[...] = 0.0
        layer.wb[...] = 0.0
        layer.ws[...] = 0.0
    X = Rng(1).uniform(16, -2, 2).reshape(8, 2)
    g = parameter_gradient(net, X, np.zeros((8, 2)), lambda_cr=0.0)
    assert np.all(g == 0.0)


def _loss(net, X, T, lam):
    out, J = net.forward_with_input_jacobian(X)
    return mse_loss(out, T) + lam * cr_loss(J)


@pytest.mark.parametrize("kind,lam", [("kan", 0.0), ("kan", 0.5), ("mlp", 0.0), ("mlp", 0.5)])
def test_parameter_gradient_matches_finite_differences(kind, lam):
    net = KanNetwork.create(hidden=3, grid_size=3, seed=2) if kind == "kan" \
        else MlpNetwork.create(hidden_dim=8, seed=2)
    r = Rng(3)
    net.set_parameters(net.get_parameters() + 0.3 * r.normal(net.parameter_count))
    X = r.uniform(12, -2, 2).reshape(6, 2)
    T = r.normal(12).reshape(6, 2)
    g = parameter_gradient(net, X, T, lam)
    p = net.get_parameters()
    h = 1e-6
    fd = np.zeros_like(g)
    for i in range(p.size):
        for sgn, slot in ((1, 0), (-1, 1)):
            q = p.copy()
            q[i] += sgn * h
            net.set_parameters(q)
            if slot == 0:
                up = _loss(net, X, T, lam)
            else:
                dn = _loss(net, X, T, lam)
        fd[i] = (up - dn) / (2 * h)
    net.set_parameters(p)
    assert np.abs(g - fd).max() / np.abs(fd).max() < 1e-3


def _short_config(**kw):
    base = dict(steps=40, warmup_steps=10, patience=30, batch_size=32)
    base.update(kw)
    return TrainConfig(**base)


def test_train_history_identity_and_determinism():
    spec = make_system("quadratic")
    net1 = KanNetwork.create(seed=42)
    net1, h1 = train(spec, net1, _short_config())
    for rep in h1.reports:
        assert rep.total == pytest.approx(rep.mse + rep.lambda_cr * rep.cr, abs=1e-12)
    steps = [rep.step for rep in h1.reports]
    assert steps == sorted(steps) and len(set(steps)) == len(steps)

    net2 = KanNetwork.create(seed=42)
    net2, h2 = train(spec, net2, _short_config())
    assert np.array_equal(net1.get_parameters(), net2.get_parameters())
    assert [r.mse for r in h1.reports] == [r.mse for r in h2.reports]
    assert [r.grad_norm_preclip for r in h1.reports] == [r.grad_norm_preclip for r in h2.reports]


def test_mlp_trains_without_cr_term():
    spec = make_system("quadratic")
    net = MlpNetwork.create(seed=42)
    net, hist = train(spec, net, _short_config())
    assert all(rep.cr == 0.0 for rep in hist.reports)
    assert all(rep.lambda_cr == 0.0 for rep in hist.reports)
    assert hist.reports[-1].mse < hist.reports[0].mse


def test_training_reduces_mse():
    spec = make_system("quadratic")
    net = KanNetwork.create(seed=42)
    net, hist = train(spec, net, _short_config(steps=120, warmup_steps=20, patience=100))
    assert hist.reports[-1].mse < 0.2 * hist.reports[0].mse


def test_diverged_network_raises():
    spec = make_system("quadratic")
    net = KanNetwork.create(seed=0)
    net.layer1.coef[...] = 1e200
    with pytest.raises(DivergedError):
        train(spec, net, _short_config(), calibrate=False)


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(patience=600).validate()
    with pytest.raises(ValueError):
        TrainConfig(noise_level=1.5).validate()
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0.0).validate()


def test_fine_tune_zero_steps_is_identity():
    spec = make_system("quadratic")
    net = KanNetwork.create(seed=1)
    before = net.get_parameters()
    net, hist = fine_tune(net, spec, TrainConfig(), steps=0)
    assert np.array_equal(before, net.get_parameters())
    assert hist.reports == []


def test_fine_tune_on_same_system_is_stable():
    spec = make_system("quadratic")
    net = KanNetwork.create(seed=42)
    net, hist = train(spec, net, _short_config(steps=150, warmup_steps=30, patience=100))
    best = min(rep.mse for rep in hist.reports)
    net, hist2 = fine_tune(net, spec, _short_config(steps=150, warmup_steps=30, patience=100), steps=60)
    assert all(rep.lambda_cr == 0.5 for rep in hist2.reports)  # warmup already saturated
    assert hist2.reports[-1].mse < 2.0 * best + 1e-9


class _FieldShim:
    """Duck-typed 'network' that evaluates an analytic field exactly."""

    def __init__(self, spec):
        self._f = field_fn(spec)

    def forward(self, X):
        w = self._f(X[:, 0] + 1j * X[:, 1])
        return np.column_stack([w.real, w.imag])


def test_trajectory_loss_zero_for_exact_field():
    spec = make_system("quadratic")
    loss = trajectory_loss(_FieldShim(spec), spec, np.array([0.2 + 0.1j, -0.3j]),
                           horizon=0.5, dt=0.05)
    assert loss == 0.0


def _rk4_oracle(f, z0, n_steps, dt):
    # independent plain RK4 in complex scalar arithmetic
    z = z0
    out = []
    for _ in range(n_steps):
        k1 = f(z)
        k2 = f(z + dt / 2 * k1)
        k3 = f(z + dt / 2 * k2)
        k4 = f(z + dt * k3)
        z = z + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        out.append(z)
    return out


def test_trajectory_loss_matches_hand_rolled_rk4():
    spec = make_system("quadratic")
    net = KanNetwork.create(seed=0)
    for layer in (net.layer1, net.layer2):
        layer.coef[...] = 0.0
        layer.wb[...] = 0.0
        layer.ws[...] = 0.0
    # zero-output network stays at z0; the truth follows z^2 + c
    z0 = 1.0 + 0.0j
    dt, horizon = 0.05, 0.1
    loss = trajectory_loss(net, spec, np.array([z0]), horizon=horizon, dt=dt)
    truth = _rk4_oracle(lambda z: z * z + spec.c, z0, 2, dt)
    expect = np.mean([abs(z0 - w) ** 2 for w in truth])
    assert loss == pytest.approx(expect, rel=1e-12)
    assert loss > 0


def test_trajectory_loss_batch_splitting():
    spec = make_system("quadratic")
    net = KanNetwork.create(seed=3)
    z = np.array([0.1 + 0.2j, -0.2 - 0.1j])
    both = trajectory_loss(net, spec, z, horizon=0.3, dt=0.05)
    single = [trajectory_loss(net, spec, z[i:i + 1], horizon=0.3, dt=0.05) for i in range(2)]
    assert both == pytest.approx(np.mean(single), rel=1e-12)


def test_trajectory_loss_diverged():
    spec = make_system("cubic")
    net = KanNetwork.create(seed=3)
    with pytest.raises(DivergedError):
        trajectory_loss(net, spec, np.array([3.0 + 0j]), horizon=2.0, dt=0.1)


def test_trajectory_gradient_matches_finite_differences():
    spec = make_system("quadratic")
    net = KanNetwork.create(hidden=3, grid_size=3, seed=5)
    z0 = np.array([0.3 + 0.2j, -0.1 + 0.4j])
    loss, grad = trajectory_gradient(net, spec, z0, horizon=0.2, dt=0.05)
    assert loss == pytest.approx(trajectory_loss(net, spec, z0, horizon=0.2, dt=0.05))
    p = net.get_parameters()
    h = 1e-6
    fd = np.zeros_like(grad)
    for i in range(p.size):
        q = p.copy(); q[i] += h
        net.set_parameters(q)
        up = trajectory_loss(net, spec, z0, horizon=0.2, dt=0.05)
        q = p.copy(); q[i] -= h
        net.set_parameters(q)
        dn = trajectory_loss(net, spec, z0, horizon=0.2, dt=0.05)
        fd[i] = (up - dn) / (2 * h)
    net.set_parameters(p)
    assert np.abs(grad - fd).max() / np.abs(fd).max() < 1e-5
