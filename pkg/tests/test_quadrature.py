import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dimerlab.errors import MaxSubdivisions
from dimerlab.quadrature import integrate_1d, integrate_torus_2d

TWO_PI = 2.0 * np.pi


def test_constant_over_period():
    res = integrate_1d(lambda t: np.ones_like(t), 0.0, TWO_PI)
    assert res.value == pytest.approx(TWO_PI, abs=1e-12)
    assert res.evaluations > 0
    assert res.error_estimate >= 0


def test_full_period_oscillation_vanishes():
    res = integrate_1d(lambda t: np.exp(1j * t), 0.0, TWO_PI)
    assert abs(res.value) < 1e-12


def test_pole_outside_unit_circle():
    # 1/(2 + e^{i t}) integrates to pi over a period (only the pole outside
    # the unit circle contributes); cross-check against a dense Riemann sum.
    res = integrate_1d(lambda t: 1.0 / (2.0 + np.exp(1j * t)), 0.0, TWO_PI)
    n = 1_000_000
    t = TWO_PI * (np.arange(n) + 0.5) / n
    riemann = np.sum(1.0 / (2.0 + np.exp(1j * t))) * TWO_PI / n
    assert res.value == pytest.approx(np.pi, abs=1e-10)
    assert res.value == pytest.approx(riemann, abs=1e-9)


def test_residue_value_with_quadratic_pole():
    # int_pi^{2pi} (1 - e^{it})/(1 + i e^{it})^2 dt = pi/2 - 1 + i,
    # by partial fractions and explicit antiderivatives along the lower arc.
    res = integrate_1d(lambda t: (1 - np.exp(1j * t)) / (1 + 1j * np.exp(1j * t)) ** 2,
                       np.pi, TWO_PI)
    assert res.value == pytest.approx(np.pi / 2 - 1 + 1j, abs=1e-11)


def test_orientation_and_empty_interval():
    f = lambda t: t**2
    fwd = integrate_1d(f, 0.0, 1.0)
    bwd = integrate_1d(f, 1.0, 0.0)
    assert fwd.value == pytest.approx(1.0 / 3.0, abs=1e-13)
    assert bwd.value == pytest.approx(-1.0 / 3.0, abs=1e-13)
    assert integrate_1d(f, 0.5, 0.5).value == 0.0


def test_error_estimate_bounds_true_error_on_known_suite():
    cases = [
        (lambda t: t**5 - 3 * t**2 + 1.0, -1.0, 2.0,
         (2.0**6 - 1.0) / 6 - (2.0**3 + 1.0) + 3.0),
        (lambda t: np.exp(2j * t), 0.0, np.pi / 3,
         (np.exp(2j * np.pi / 3) - 1.0) / 2j),
        (lambda t: np.cos(7 * t), 0.0, 1.0, np.sin(7.0) / 7.0),
        (lambda t: 1.0 / (2.0 + np.exp(1j * t)), 0.0, TWO_PI, np.pi),
    ]
    for f, a, b, exact in cases:
        res = integrate_1d(f, a, b, tol=1e-11)
        assert abs(res.value - exact) <= max(res.error_estimate, 1e-11)


def test_max_subdivisions_on_singular_integrand():
    with pytest.raises(MaxSubdivisions):
        integrate_1d(lambda t: 1.0 / np.abs(t - 0.3456), 0.0, 1.0,
                     tol=1e-12, max_subdivisions=64)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=1, max_size=6))
def test_polynomials_integrate_exactly(coeffs):
    # GK15 is exact for polynomials well beyond degree 6; the adaptive
    # wrapper must preserve that up to roundoff.
    poly = np.polynomial.Polynomial(coeffs)
    res = integrate_1d(lambda t: poly(t), -1.0, 2.0, tol=1e-9)
    exact = poly.integ()(2.0) - poly.integ()(-1.0)
    assert res.value == pytest.approx(exact, abs=1e-9 + 1e-12 * abs(exact))


def test_torus_grid_normalization_and_oscillation():
    assert integrate_torus_2d(lambda k1, k2: np.ones_like(k1), 64) == pytest.approx(1.0)
    assert abs(integrate_torus_2d(lambda k1, k2: np.exp(1j * k1), 64)) < 1e-14
    assert abs(integrate_torus_2d(lambda k1, k2: np.exp(1j * (3 * k1 - 2 * k2)), 64)) < 1e-13


def test_torus_grid_smooth_function_spectral_accuracy():
    f = lambda k1, k2: 1.0 / (2.0 + np.cos(k1) * np.sin(k2 + 0.3))
    v64 = integrate_torus_2d(f, 64)
    v128 = integrate_torus_2d(f, 128)
    assert abs(v64 - v128) < 1e-12


def test_torus_grid_rejects_tiny_n():
    with pytest.raises(ValueError):
        integrate_torus_2d(lambda k1, k2: k1, 4)


def test_torus_grid_block_path_matches_direct():
    # n > 1024 goes through the blocked accumulation path
    f = lambda k1, k2: np.exp(1j * k1) / (2.0 + np.cos(k2))
    n = 1088
    k = -np.pi + TWO_PI * (np.arange(n) + 0.5) / n
    k1, k2 = np.meshgrid(k, k, indexing="ij")
    direct = complex(np.mean(f(k1, k2)))
    assert integrate_torus_2d(f, n) == pytest.approx(direct, abs=1e-15)
