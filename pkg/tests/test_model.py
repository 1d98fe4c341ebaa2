import numpy as np
import pytest

from crkan.errors import DegenerateRangeError
from crkan.model import KanNetwork, MlpNetwork, calibrate_hidden_grid, silu
from crkan.rng import Rng
from crkan.splines import KnotGrid, basis_arrays
from crkan.systems import make_system


def random_batch(n, seed=0, lo=-2.0, hi=2.0):
    r = Rng(seed)
    return r.uniform(2 * n, lo, hi).reshape(n, 2)


@pytest.mark.parametrize("hidden,count", [(3, 168), (5, 280), (8, 448), (10, 560)])
def test_kan_parameter_count_by_width(hidden, count):
    assert KanNetwork.create(hidden=hidden).parameter_count == count


@pytest.mark.parametrize("grid,count", [(3, 240), (5, 280), (7, 320), (10, 380)])
def test_kan_parameter_count_by_grid(grid, count):
    assert KanNetwork.create(grid_size=grid).parameter_count == count


def test_mlp_parameter_count():
    assert MlpNetwork.create().parameter_count == 4482


def test_zero_spline_edges_give_zero_output():
    net = KanNetwork.create(seed=1)
    for layer in (net.layer1, net.layer2):
        layer.coef[...] = 0.0
        layer.wb[...] = 0.0
        layer.ws[...] = 1.0
    out = net.forward(random_batch(5))
    assert np.all(out == 0.0)


def test_recording_is_observation_only():
    net = KanNetwork.create(seed=2)
    X = random_batch(17, seed=3)
    plain = net.forward(X)
    recorded, records = net.forward(X, record=True)
    assert np.array_equal(plain, recorded)
    assert len(records) == 2 * net.hidden + net.hidden * 2
    first = records[0]
    assert first.layer == 1 and first.inputs.shape == (17,)


def test_parameter_roundtrip_is_bitwise():
    for net in (KanNetwork.create(seed=4), MlpNetwork.create(seed=4)):
        X = random_batch(100, seed=5)
        before = net.forward(X)
        vec = net.get_parameters()
        net.set_parameters(vec)
        assert np.array_equal(before, net.forward(X))
        assert np.array_equal(vec, net.get_parameters())


@pytest.mark.parametrize("kind", ["kan", "mlp"])
def test_input_jacobian_matches_finite_differences(kind):
    if kind == "kan":
        net = KanNetwork.create(seed=6)
    else:
        net = MlpNetwork.create(seed=6)
    r = Rng(7)
    net.set_parameters(net.get_parameters() + 0.3 * r.normal(net.parameter_count))
    X = random_batch(50, seed=8)
    _, J = net.forward_with_input_jacobian(X)
    h = 1e-5
    fd = np.zeros_like(J)
    for q in range(2):
        Xp, Xm = X.copy(), X.copy()
        Xp[:, q] += h
        Xm[:, q] -= h
        fd[:, :, q] = (net.forward(Xp) - net.forward(Xm)) / (2 * h)
    assert np.abs(J - fd).max() / np.abs(fd).max() < 1e-4


def test_silu_only_x_edge_has_no_y_dependence():
    net = KanNetwork.create(seed=0)
    for layer in (net.layer1, net.layer2):
        layer.coef[...] = 0.0
        layer.wb[...] = 0.0
        layer.ws[...] = 0.0
    net.layer1.wb[0, 0] = 1.0  # reads x into hidden node 0
    net.layer2.wb[0, 0] = 1.0  # passes hidden node 0 to u
    X = random_batch(20, seed=9)
    out, J = net.forward_with_input_jacobian(X)
    assert np.allclose(out[:, 0], silu(silu(X[:, 0])))
    assert np.all(J[:, 0, 1] == 0.0)  # u has no y-dependence


def test_all_zero_weights_give_zero_jacobian():
    net = KanNetwork.create(seed=0)
    for layer in (net.layer1, net.layer2):
        layer.coef[...] = 0.0
        layer.wb[...] = 0.0
        layer.ws[...] = 0.0
    _, J = net.forward_with_input_jacobian(random_batch(10))
    assert np.all(J == 0.0)


def test_output_layer_scale_is_positively_homogeneous():
    net = KanNetwork.create(seed=11)
    net.layer2.wb[...] = 0.0
    X = random_batch(32, seed=12)
    base = net.forward(X)
    net.layer2.ws[...] *= 2.0
    assert np.array_equal(net.forward(X), 2.0 * base)


def test_continuity_across_knots():
    net = KanNetwork.create(seed=13)
    r = Rng(14)
    net.set_parameters(net.get_parameters() + 0.5 * r.normal(net.parameter_count))
    eps = 1e-7
    for knot in net.layer1.grid.knots[3:-3]:
        X = np.array([[knot - eps, 0.3], [knot + eps, 0.3]])
        out, J = net.forward_with_input_jacobian(X)
        lip = max(1.0, np.abs(J).max())
        assert np.abs(out[1] - out[0]).max() < 10 * (2 * eps) * lip


def _net_with_hidden_equal_half_x(hidden_range=(-2.5, 2.5)):
    """Constructs hidden nodes h_j(x, y) = x/2 via spline linear precision."""
    net = KanNetwork.create(seed=0, hidden_range=hidden_range)
    net.layer1.wb[...] = 0.0
    net.layer1.ws[...] = 1.0
    net.layer1.coef[...] = 0.0
    net.layer1.coef[0, :, :] = net.layer1.grid.knots / 2.0
    return net


def test_calibration_pads_observed_range_ten_percent():
    net = _net_with_hidden_equal_half_x()
    spec = make_system("quadratic")
    calibrate_hidden_grid(net, spec, n=4000, seed=1)
    # hidden values span about [-1, 1], padded to about [-1.1, 1.1]
    assert net.layer2.grid.lo == pytest.approx(-1.1, abs=0.01)
    assert net.layer2.grid.hi == pytest.approx(1.1, abs=0.01)


def test_calibration_is_idempotent():
    net = _net_with_hidden_equal_half_x()
    spec = make_system("quadratic")
    calibrate_hidden_grid(net, spec, n=1000, seed=2)
    lo1, hi1 = net.layer2.grid.lo, net.layer2.grid.hi
    c1 = net.layer2.coef.copy()
    calibrate_hidden_grid(net, spec, n=1000, seed=2)
    assert abs(net.layer2.grid.lo - lo1) < 1e-9 * max(1.0, abs(lo1))
    assert abs(net.layer2.grid.hi - hi1) < 1e-9 * max(1.0, abs(hi1))
    assert np.abs(net.layer2.coef - c1).max() < 1e-9


def test_calibration_refit_preserves_edge_curves():
    # old grid narrower than the observed range, smooth learned curves
    net = _net_with_hidden_equal_half_x(hidden_range=(-0.9, 0.9))
    old_grid = net.layer2.grid
    B, _ = basis_arrays(old_grid, old_grid.knots)
    # least-squares coefficients that make each edge's spline track sin(x)
    target = np.sin(old_grid.knots)
    coef, *_ = np.linalg.lstsq(B, target, rcond=None)
    net.layer2.coef[...] = coef[None, None, :]
    xs = np.linspace(old_grid.lo, old_grid.hi, 300)
    before = [net.edge_function(2, j, i)(xs) for j in range(net.hidden) for i in range(2)]
    calibrate_hidden_grid(net, make_system("quadratic"), n=2000, seed=3)
    assert net.layer2.grid.lo < old_grid.lo  # new range covers the old one
    after = [net.edge_function(2, j, i)(xs) for j in range(net.hidden) for i in range(2)]
    for b, a in zip(before, after):
        rms = np.sqrt(np.mean((b - a) ** 2))
        assert rms < 1e-3


def test_calibration_rejects_dead_hidden_units():
    net = KanNetwork.create(seed=0)
    net.layer1.coef[...] = 0.0
    net.layer1.wb[...] = 0.0
    net.layer1.ws[...] = 0.0
    with pytest.raises(DegenerateRangeError):
        calibrate_hidden_grid(net, make_system("quadratic"), n=100, seed=0)


def test_edge_function_matches_recorded_activation():
    net = KanNetwork.create(seed=21)
    X = random_batch(13, seed=22)
    _, records = net.forward(X, record=True)
    rec = records[3]
    phi = net.edge_function(rec.layer, rec.from_node, rec.to_node)
    assert np.allclose(phi(rec.inputs), rec.outputs, atol=1e-12)
