import cmath

import numpy as np
import pytest

from crkan.errors import NonFiniteError, SingularInputError
from crkan.rng import Rng
from crkan.systems import (PURE_SYSTEMS, Domain, SystemId, field_fn, make_system,
                           sample_domain, velocity)


def test_quadratic_at_origin_is_c():
    spec = make_system("quadratic")
    assert velocity(spec, 0j) == complex(-0.4, 0.6)


def test_quadratic_at_one():
    spec = make_system("quadratic")
    assert cmath.isclose(velocity(spec, 1 + 0j), complex(0.6, 0.6))


def test_potential_flow_on_axis():
    spec = make_system("potential")
    assert cmath.isclose(velocity(spec, 2 + 0j), complex(2.5, 0.0))


def test_exponential_at_i_against_independent_evaluation():
    # oracle: complex exponential evaluated with the standard library
    spec = make_system("exp")
    expected = cmath.exp(1j) + complex(-0.4, 0.6)
    got = velocity(spec, 1j)
    assert cmath.isclose(got, expected, rel_tol=1e-15)
    assert abs(got.real - (cmath.cos(1).real - 0.4)) < 1e-12
    assert abs(got.imag - (cmath.sin(1).real + 0.6)) < 1e-12


def _oracle(spec, z):
    # independent scalar evaluation of every registry formula
    c = spec.c
    return {
        SystemId.QUADRATIC: lambda: z * z + c,
        SystemId.CUBIC: lambda: z ** 3 + c,
        SystemId.EXPONENTIAL: lambda: cmath.exp(z) + c,
        SystemId.SINE: lambda: cmath.sin(z) + c,
        SystemId.COSINE: lambda: cmath.cos(z) + c,
        SystemId.MIXED_EXP: lambda: z * cmath.exp(z) + c,
        SystemId.POTENTIAL_FLOW: lambda: spec.free_stream * z + spec.free_stream * spec.radius ** 2 / z,
    }[spec.id]()


@pytest.mark.parametrize("system_id", list(SystemId))
def test_velocity_matches_closed_form(system_id):
    spec = make_system(system_id)
    pts = sample_domain(spec, 64, seed=99).points
    f = field_fn(spec)
    for z in pts[:16]:
        z = complex(z)
        assert cmath.isclose(velocity(spec, z), _oracle(spec, z), rel_tol=1e-13, abs_tol=1e-13)
    batch = f(pts)
    expect = np.array([_oracle(spec, complex(z)) for z in pts])
    assert np.abs(batch - expect).max() < 1e-12


def test_sampling_is_deterministic():
    spec = make_system("quadratic")
    a = sample_domain(spec, 128, seed=42)
    b = sample_domain(spec, 128, seed=42)
    assert np.array_equal(a.points, b.points)
    assert a.count == 128 and len(a.points) == 128


def test_sampling_respects_exclusion_disk():
    spec = make_system("potential")
    s = sample_domain(spec, 1000, seed=7)
    assert np.all(np.abs(s.points) > 1.1)


def test_sampling_stays_in_domain():
    spec = make_system("quadratic")
    s = sample_domain(spec, 4, seed=0)
    assert np.all(np.abs(s.points.real) <= 2.0)
    assert np.all(np.abs(s.points.imag) <= 2.0)


def test_sample_mean_is_centered():
    spec = make_system("quadratic")
    s = sample_domain(spec, 100000, seed=3)
    assert abs(s.points.real.mean()) < 0.05
    assert abs(s.points.imag.mean()) < 0.05


def test_singular_input_raises():
    spec = make_system("potential")
    with pytest.raises(SingularInputError):
        velocity(spec, 0.5 + 0j)


def test_overflow_raises_nonfinite():
    spec = make_system("exp")
    with pytest.raises(NonFiniteError):
        velocity(spec, 1000 + 0j)


def test_invalid_specs_rejected():
    with pytest.raises(ValueError):
        make_system("potential", radius=2.0)  # exclusion disk would swallow the domain
    with pytest.raises(ValueError):
        make_system("quadratic", c=complex(float("nan"), 0.0))


def test_every_field_is_holomorphic_by_finite_differences():
    # central-difference Jacobians of each closed form satisfy the CR relations
    from crkan.analysis import AnalyticField, build_eval_grid
    from crkan.training import cr_residuals

    for system_id in list(SystemId):
        spec = make_system(system_id)
        grid = build_eval_grid(spec, 40, 40)
        jac = AnalyticField(spec).jacobian(grid.points)
        assert cr_residuals(jac).max() < 1e-4, spec.id


def test_domain_helper():
    d = Domain(-2.0, 2.0)
    assert d.width == 4.0
    assert d.contains(1 + 1j) and not d.contains(3 + 0j)
