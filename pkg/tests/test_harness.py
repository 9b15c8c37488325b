import math
from dataclasses import replace

import numpy as np
import pytest

from darcylayers import harness
from darcylayers.config import RunConfig
from darcylayers.transport import SimConfig


def small_config(**sim):
    s = dict(dt=0.01, t_end=0.1, output_every=2, amplitude=0.1)
    s.update(sim)
    return RunConfig(nx=8, nz_per_layer=(8, 16, 8), sim=SimConfig(**s))


def test_fit_slope_exact_power_law():
    eps = np.array([1e-1, 1e-2, 1e-3])
    fit = harness.fit_slope(eps, 3 * eps**1.5)
    assert fit.slope == pytest.approx(1.5, abs=1e-12) and fit.residual < 1e-12 and fit.n_used == 3


def test_fit_slope_excludes_floor_and_zeros():
    eps = np.array([1e-1, 1e-2, 1e-3, 0.0])
    err = np.array([1e-1, 1e-2, 5e-9, 0.0])
    fit = harness.fit_slope(eps, err, floor=1e-9)
    assert fit.n_used == 2 and fit.slope == pytest.approx(1.0)
    assert math.isnan(harness.fit_slope([1e-1], [1.0]).slope)


def test_zero_epsilon_only_report_is_zero():
    rep = harness.converge_dynamic(small_config(), [0.0], 0.1)
    for v in rep.errors.values():
        assert np.all(v == 0.0)
    assert rep.floor == 0.0 and rep.M7 == 0.0


def test_horizontally_uniform_state_is_epsilon_blind():
    # psi independent of x drives no flow, so every epsilon gives the same run
    cfg = replace(small_config(mode_x=0, amplitude=0.5), c_top=0.0, c_bottom=0.0)
    rep = harness.converge_dynamic(cfg, [1e-1, 1e-2], 0.1)
    for v in rep.errors.values():
        assert np.all(v <= 1e-12)


def test_dynamic_report_is_deterministic():
    a = harness.converge_dynamic(small_config(), [1e-1, 1e-2], 0.1)
    b = harness.converge_dynamic(small_config(), [1e-1, 1e-2], 0.1)
    assert a.rows == b.rows


def test_dynamic_errors_shrink_with_epsilon():
    rep = harness.converge_dynamic(small_config(), [1e-1, 1e-2, 1e-3], 0.1)
    assert rep.monotone("combined_T")
    assert 0.8 < rep.slope("combined_T") < 1.2
    assert rep.M7 > 0 and not rep.notes


def test_self_refinement_floor_positive():
    rep = harness.converge_dynamic(small_config(), [1e-1], 0.05, floor="self-refinement")
    assert rep.floor > 0
    with pytest.raises(ValueError):
        harness.converge_dynamic(small_config(), [1e-1], 0.05, floor="bogus")


def test_parallel_matches_serial():
    cfg = small_config(single_threaded=False)
    a = harness.converge_dynamic(cfg, [1e-1, 1e-2], 0.05, workers=2)
    b = harness.converge_dynamic(cfg, [1e-1, 1e-2], 0.05, workers=1)
    assert a.rows == b.rows


def test_long_run_distance():
    cfg = small_config()
    zero = harness.long_run_distance(cfg, 0.0, 0.1, 0.1)
    assert zero["distance"] == 0.0
    d = harness.long_run_distance(cfg, 0.1, 0.1, 0.1)
    assert math.isfinite(d["distance"]) and d["distance"] <= d["bound"] and not d["failed"]


def test_mode_one_profile_degenerate_interior():
    za, prof, grid, sol = harness.mode_one_profile(0.0, 16)
    inner = (za > -1) & (za < 1)
    # in the impermeable layer the pressure balances the forcing, p' = -psi
    assert sol.path == "degenerate"
    assert np.all(np.isfinite(prof[inner]))


def test_elliptic_report_structure():
    rep = harness.converge_elliptic((16, 32), (1e-1, 0.0))
    assert rep.extra["ratios"].shape == (1, 2)
    assert rep.errors["eps_error"][-1] == 0.0
    assert len(rep.rows) == 4
