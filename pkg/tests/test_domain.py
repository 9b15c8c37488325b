import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from darcylayers import (
    ConfigurationError,
    build_background_profile,
    build_layer_stack,
    default_delta,
    make_grid,
    max_delta,
)


def three_layer(eps=0.5, K_outer=1.0, D=(1.0, 1.0, 1.0)):
    return build_layer_stack(2 * math.pi, 4.0, [-3.0, -1.0], [K_outer, eps, K_outer], D, degenerate_layer=1, epsilon=eps)


def test_three_layer_stack():
    s = three_layer(0.25)
    assert s.n_layers == 3
    assert s.permeabilities == (1.0, 0.25, 1.0)
    assert s.epsilon == 0.25
    np.testing.assert_array_equal(s.thicknesses, [1.0, 2.0, 1.0])
    assert not s.is_degenerate
    assert s.with_epsilon(0.0).is_degenerate


def test_single_layer_stack():
    s = build_layer_stack(1.0, 1.0, [], [1.0], [1.0])
    assert s.n_layers == 1
    assert s.degenerate_layer is None


def test_interface_belongs_to_layer_above():
    s = three_layer()
    np.testing.assert_array_equal(s.layer_of([-4.0, -3.0, -2.0, -1.0, -0.5, 0.0]), [0, 1, 1, 2, 2, 2])


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(interfaces=[1.0, -1.0]),
        dict(interfaces=[-1.0, -3.0]),
        dict(interfaces=[-4.0, -1.0]),
        dict(permeabilities=[1.0, -1.0, 1.0]),
        dict(diffusivities=[1.0, 0.0, 1.0]),
        dict(permeabilities=[1.0, 1.0]),
        dict(permeabilities=[0.0, 1.0, 1.0]),
        dict(degenerate_layer=[0, 1]),
    ],
)
def test_invalid_stacks(kwargs):
    args = dict(period=1.0, depth=4.0, interfaces=[-3.0, -1.0], permeabilities=[1.0, 1.0, 1.0],
                diffusivities=[1.0, 1.0, 1.0])
    args.update(kwargs)
    with pytest.raises(ConfigurationError):
        build_layer_stack(**args)


def test_degenerate_entry_follows_epsilon():
    s = build_layer_stack(1.0, 4.0, [-3.0, -1.0], [1.0, 7.0, 1.0], [1.0] * 3, degenerate_layer=1, epsilon=0.0)
    assert s.permeabilities[1] == 0.0


def test_max_delta_values():
    s = build_layer_stack(1.0, 4.0, [-2.0], [4.0, 1.0], [1.0, 3.0])
    assert max_delta(s, 2.0) == pytest.approx(1 / 64, rel=1e-15)
    assert max_delta(s, 0.0) == 1.0
    deep = build_layer_stack(1.0, 100.0, [], [1.0], [1.0])
    assert max_delta(deep, 1.0) == pytest.approx(0.125, rel=1e-15)


def test_max_delta_uses_eps_one_for_the_degenerate_layer():
    s = three_layer(0.0, K_outer=0.5)
    assert max_delta(s, 1.0) == pytest.approx(1 / 8)


@given(c1=st.floats(0.01, 10), c2=st.floats(0.01, 10), k=st.floats(0.1, 10), d=st.floats(0.1, 10))
@settings(max_examples=50, deadline=None)
def test_max_delta_monotone(c1, c2, k, d):
    lo, hi = sorted([c1, c2])
    s = build_layer_stack(1.0, 4.0, [], [k], [d])
    assert max_delta(s, hi) <= max_delta(s, lo)
    s2 = build_layer_stack(1.0, 4.0, [], [2 * k], [d])
    assert max_delta(s2, lo) <= max_delta(s, lo)
    s3 = build_layer_stack(1.0, 4.0, [], [k], [2 * d])
    assert max_delta(s3, lo) >= max_delta(s, lo)


def test_constant_profile():
    s = three_layer()
    g = make_grid(s, 4, 16)
    p = build_background_profile(s, 5.0, 5.0, None, g.z)
    assert np.all(p.phi_b == 5.0)
    assert np.all(p.dphi_b == 0.0)
    assert np.all(p.d2phi_b == 0.0)


def test_profile_bounds_are_attained():
    s = build_layer_stack(1.0, 1.0, [], [1.0], [1.0])
    g = make_grid(s, 4, 80)  # nodes every 1/80, so delta/2 = 0.05 is a node
    p = build_background_profile(s, 1.0, 0.0, 0.1, g.z)
    assert np.abs(p.dphi_b).max() == pytest.approx(10.0, rel=1e-12)
    zs = np.linspace(-1, 0, 10001)
    _, d1, d2 = p.evaluate(zs)
    assert np.abs(d1).max() <= 10.0 * (1 + 1e-12)
    assert np.abs(d2).max() == pytest.approx(200.0, rel=1e-12)
    assert np.abs(p.d2phi_b).max() <= 200.0 * (1 + 1e-12)


def test_profile_boundary_values_and_plateau():
    s = three_layer()
    g = make_grid(s, 4, 64)
    p = build_background_profile(s, -1.0, 1.0, None, g.z)
    assert p.phi_b[-1] == pytest.approx(-1.0, abs=1e-14)
    assert p.phi_b[0] == pytest.approx(1.0, abs=1e-14)
    plateau = (g.z > -4 + p.delta) & (g.z < -p.delta)
    assert np.all(p.phi_b[plateau] == 0.0)
    assert np.all(p.dphi_b[plateau] == 0.0)
    mid = np.argmin(np.abs(g.z + 2.0))
    assert p.phi_b[mid] == 0.0
    assert p.delta == pytest.approx(default_delta(s, -1.0, 1.0))


def test_profile_is_c1():
    s = build_layer_stack(1.0, 1.0, [], [1.0], [1.0])
    p = build_background_profile(s, 1.0, -1.0, 0.05, np.linspace(-1, 0, 101))
    z = np.linspace(-1, 0, 200001)
    phi, d1, _ = p.evaluate(z)
    assert np.abs(np.diff(phi)).max() < 1e-3
    assert np.abs(np.diff(d1)).max() < 1e-2


def test_profile_rejections():
    s = three_layer()
    g = make_grid(s, 4, 16)
    with pytest.raises(ConfigurationError):
        build_background_profile(s, -1.0, 1.0, 1.0, g.z)
    thin = build_layer_stack(1.0, 4.0, [-3.99, -1.0], [1.0, 1.0, 1.0], [1.0] * 3)
    with pytest.raises(ConfigurationError):
        build_background_profile(thin, 0.0, 0.01, 0.5, np.linspace(-4, 0, 9))
    with pytest.raises(ConfigurationError):
        build_background_profile(s, -1.0, 1.0, None, np.linspace(-3, 0, 9))
