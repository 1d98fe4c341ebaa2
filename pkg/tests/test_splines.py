import numpy as np
import pytest

from crkan.rng import Rng
from crkan.splines import KnotGrid, basis_arrays, basis_derivatives, basis_values


@pytest.mark.parametrize("g", [3, 5, 7, 10])
def test_partition_of_unity_and_nonnegativity(g):
    grid = KnotGrid(-2.5, 2.5, g, 3)
    xs = Rng(g).uniform(200, grid.lo, grid.hi)
    B = basis_values(grid, xs)
    assert np.all(B >= 0)
    assert np.abs(B.sum(axis=1) - 1.0).max() < 1e-12


def test_at_most_order_plus_one_nonzero():
    grid = KnotGrid(-2.5, 2.5, 5, 3)
    xs = Rng(0).uniform(500, grid.lo, grid.hi)
    B = basis_values(grid, xs)
    assert int((B > 1e-14).sum(axis=1).max()) <= grid.order + 1


def test_basis_count_one_per_knot():
    grid = KnotGrid(-2.5, 2.5, 5, 3)
    assert grid.n_basis == 12
    assert len(grid.knots) == 12
    assert basis_values(grid, 0.3).shape == (12,)


def test_palindromic_at_center_of_symmetric_grid():
    grid = KnotGrid(-2.5, 2.5, 5, 3)
    v = basis_values(grid, 0.0)
    assert np.abs(v - v[::-1]).max() < 1e-14


def test_clamping_matches_boundary_value():
    grid = KnotGrid(-2.5, 2.5, 5, 3)
    assert np.allclose(basis_values(grid, grid.lo), basis_values(grid, grid.lo - 1.0))
    assert np.allclose(basis_values(grid, grid.hi), basis_values(grid, grid.hi + 3.0))


def test_derivative_sums_to_zero_inside():
    grid = KnotGrid(-2.5, 2.5, 5, 3)
    xs = Rng(3).uniform(100, grid.lo, grid.hi)
    assert np.abs(basis_derivatives(grid, xs).sum(axis=1)).max() < 1e-10


def test_derivative_matches_finite_differences():
    grid = KnotGrid(-2.5, 2.5, 5, 3)
    h = 1e-5
    xs = Rng(11).uniform(100, grid.lo + 2 * h, grid.hi - 2 * h)
    fd = (basis_values(grid, xs + h) - basis_values(grid, xs - h)) / (2 * h)
    an = basis_derivatives(grid, xs)
    scale = np.abs(an).max()
    assert np.abs(fd - an).max() / scale < 1e-5


def test_derivative_zero_in_clamp_region():
    grid = KnotGrid(-2.5, 2.5, 5, 3)
    assert np.all(basis_derivatives(grid, grid.lo - 0.5) == 0.0)
    assert np.all(basis_derivatives(grid, grid.hi + 0.5) == 0.0)


def test_local_support_radius():
    # bump m lives within (order+1)/2 spacings of its knot
    grid = KnotGrid(-2.5, 2.5, 5, 3)
    h = grid.spacing
    half = (grid.order + 1) * h / 2
    for m in (4, 6, 8):
        c = grid.knots[m]
        outside = np.array([c - half - 1e-9, c + half + 1e-9])
        outside = outside[(outside >= grid.lo) & (outside <= grid.hi)]
        if outside.size:
            assert np.abs(basis_values(grid, outside)[:, m]).max() < 1e-14
        inside = np.array([c - half / 2, c + half / 2])
        assert basis_values(grid, inside)[:, m].max() > 1e-3


def test_second_derivative_matches_finite_differences():
    grid = KnotGrid(-2.5, 2.5, 5, 3)
    h = 1e-5
    xs = Rng(17).uniform(50, grid.lo + 2 * h, grid.hi - 2 * h)
    _, _, Bpp = basis_arrays(grid, xs, second=True)
    fd = (basis_derivatives(grid, xs + h) - basis_derivatives(grid, xs - h)) / (2 * h)
    assert np.abs(fd - Bpp).max() / np.abs(Bpp).max() < 1e-4


def test_linear_precision_of_knot_weighted_sum():
    # control values equal to the knots reproduce the identity on [lo, hi]
    grid = KnotGrid(-2.5, 2.5, 5, 3)
    xs = np.linspace(grid.lo, grid.hi, 41)
    curve = basis_values(grid, xs) @ grid.knots
    assert np.abs(curve - xs).max() < 1e-12
