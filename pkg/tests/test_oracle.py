import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from darcylayers import oracle

E = math.e


def test_limit_coefficients():
    c = oracle.appendix_coefficients(0.0)
    assert c.a_plus == pytest.approx(-1 / (E * (E * E - 1)), rel=1e-12)
    assert c.b_minus == pytest.approx(-1 / (E * (E * E - 1)), rel=1e-12)
    assert c.a_zero == pytest.approx(-E / (E * E - 1), rel=1e-12)
    assert c.b_zero == pytest.approx(-E / (E * E - 1), rel=1e-12)
    assert c.a_minus == pytest.approx(-(E**3) / (E * E - 1), rel=1e-12)
    assert c.b_plus == pytest.approx(-(E**3) / (E * E - 1), rel=1e-12)
    # printed decimals
    assert c.a_plus == pytest.approx(-5.75797e-2, abs=1e-7)
    assert c.a_zero == pytest.approx(-4.25459e-1, abs=1e-6)
    assert c.a_minus == pytest.approx(-3.14374, abs=1e-5)


def test_eps_one_vanishes():
    assert np.all(oracle.appendix_coefficients(1.0).vector() == 0.0)


def test_scaling_law():
    c0 = oracle.appendix_coefficients(0.0).vector()
    for eps in np.linspace(0, 1, 41):
        np.testing.assert_allclose(oracle.appendix_coefficients(eps).vector(), c0 * (1 - eps) / (1 + eps), rtol=1e-13)
    np.testing.assert_allclose(oracle.appendix_coefficients(0.5).vector(), c0 / 3, rtol=1e-13)


def test_residual_dense_grid():
    for eps in np.linspace(0, 1, 101):
        assert oracle.appendix_coefficients(eps).residual() <= 1e-10


def test_continuous_variant():
    for eps in (0.0, 0.3, 1.0):
        c = oracle.continuous_coefficients(eps)
        assert c.residual() <= 1e-12
        z = np.array([1.0 - 1e-13, 1.0, -1.0 - 1e-13, -1.0])
        p = oracle.appendix_profile(eps, z, "continuous")
        assert abs(p[0] - p[1]) < 1e-10 and abs(p[2] - p[3]) < 1e-10
    # on the permeable layers the two conventions agree at eps = 0
    z = np.array([-2.0, -1.5, -1.01, 1.01, 1.5, 2.0])
    np.testing.assert_allclose(oracle.appendix_profile(0, z), oracle.appendix_profile(0, z, "continuous"), atol=1e-14)


def test_pressure_values():
    x = np.linspace(0, 2 * np.pi, 7)
    np.testing.assert_allclose(oracle.appendix_pressure(1.0, x, 0.3), -np.cos(x), atol=1e-15)
    # own evaluation of a+ e^1.5 + b+ e^-1.5 + 1 at eps = 0, frozen
    assert oracle.appendix_pressure(0.0, 0.0, 1.5) == pytest.approx(0.04048262, abs=5e-9)


def test_forcing_profile():
    np.testing.assert_array_equal(oracle.psi_profile([2.0, 1.0, -1.0, -2.0, 0.0]), [0.0, -1.0, 1.0, 0.0, 0.0])


def test_h1_error_factorisation():
    assert oracle.appendix_h1_error(0.0) == 0.0
    c0 = oracle.limit_exponential_norm()
    eps = np.logspace(-4, -1, 13)
    ratio = np.array([oracle.appendix_h1_error(e) / (2 * e / (1 + e)) for e in eps])
    np.testing.assert_allclose(ratio, c0, rtol=1e-10)
    e4 = np.array([1e-1, 1e-2, 1e-3, 1e-4])
    slope = np.polyfit(np.log(e4), np.log([oracle.appendix_h1_error(e) for e in e4]), 1)[0]
    # the factor 1/(1+eps) bends the curve: the fit is that of log(eps/(1+eps))
    assert slope == pytest.approx(np.polyfit(np.log(e4), np.log(e4 / (1 + e4)), 1)[0], abs=1e-10)
    assert slope == pytest.approx(0.98721, abs=1e-5)
    small = [1e-3, 1e-4]
    slope_small = np.polyfit(np.log(small), np.log([oracle.appendix_h1_error(e) for e in small]), 1)[0]
    assert slope_small == pytest.approx(1.0, abs=1e-3)
    assert oracle.appendix_h1_error(1e-8) / 1e-8 == pytest.approx(2 * c0, rel=1e-6)


def test_h1_quadrature_matches_numerical():
    from scipy.integrate import quad

    eps = 0.2
    d = lambda z, der=False: oracle.appendix_profile(eps, z, "printed", der) - oracle.appendix_profile(0, z, "printed", der)  # noqa: E731
    total = 0.0
    for lo, hi in ((-2, -1), (-1, 1), (1, 2)):
        a, b = lo + 1e-15, hi - 1e-15
        total += quad(lambda z: 2 * d(z) ** 2 + d(z, True) ** 2, a, b, epsabs=1e-14)[0]
    assert oracle.appendix_h1_error(eps) == pytest.approx(math.sqrt(math.pi * total), rel=1e-10)


def test_limit_solves_outer_neumann_problem():
    # on the permeable layers at eps = 0: p'' - p = psi' and p' + psi = 0 at z = +-2, +-1
    z_up = np.array([1.0, 2.0])
    dp = oracle.appendix_profile(0.0, z_up, derivative=True)
    np.testing.assert_allclose(dp + oracle.psi_profile(z_up), 0.0, atol=1e-12)
    z_lo = np.array([-2.0, -1.0 - 1e-300])
    co = oracle.appendix_coefficients(0.0)
    dlo = co.a_minus * np.exp(z_lo) - co.b_minus * np.exp(-z_lo)
    np.testing.assert_allclose(dlo + oracle.psi_profile(z_lo), 0.0, atol=1e-12)


def test_negative_epsilon():
    with pytest.raises(ValueError):
        oracle.appendix_coefficients(-0.1)


@settings(max_examples=200, deadline=None)
@given(st.floats(min_value=0.0, max_value=1.0, allow_nan=False))
def test_closed_form_solves_system_for_any_eps(eps):
    c = oracle.appendix_coefficients(eps)
    assert c.residual() <= 1e-10
    np.testing.assert_allclose(c.vector(), oracle.appendix_coefficients(0.0).vector() * (1 - eps) / (1 + eps),
                               rtol=1e-12, atol=1e-15)


@settings(max_examples=100, deadline=None)
@given(st.floats(min_value=1e-6, max_value=1.0))
def test_h1_error_factorises_for_any_eps(eps):
    assert oracle.appendix_h1_error(eps) == pytest.approx(2 * eps / (1 + eps) * oracle.limit_exponential_norm(),
                                                          rel=1e-9)
