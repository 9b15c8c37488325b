"""Exit criteria.  Each test prints one PASS/FAIL line, then asserts.

Run only these with ``pytest -m acceptance -s``.
"""
import math
import time
from dataclasses import replace

import numpy as np
import pytest

from darcylayers import PressureSolver, ScalarField, make_grid, velocity
from darcylayers import estimates as est
from darcylayers import harness, oracle
from darcylayers.cli import main
from darcylayers.config import default_config
from darcylayers.fields import rfft
from darcylayers.pressure import divergence_hat
from darcylayers.transport import SimConfig, initial_condition, simulate

pytestmark = pytest.mark.acceptance

E = math.e
DYNAMIC_EPS = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3]


def report(capsys, number, ok, detail, runtime, limit):
    ok = ok and runtime < limit
    with capsys.disabled():
        print(f"\n{'PASS' if ok else 'FAIL'} criterion {number}: {detail} [{runtime:.2f} s < {limit:g} s]")
    return ok


def test_criterion_1_limit_coefficients(capsys):
    t0 = time.perf_counter()
    c = oracle.appendix_coefficients(0.0)
    a, b, g = -1 / (E * (E * E - 1)), -E / (E * E - 1), -(E**3) / (E * E - 1)
    got = [c.a_plus, c.b_minus, c.a_zero, c.b_zero, c.a_minus, c.b_plus]
    want = [a, a, b, b, g, g]
    rel = max(abs(x / y - 1) for x, y in zip(got, want))
    ok = report(capsys, 1, rel <= 1e-12, f"max relative deviation {rel:.2e}", time.perf_counter() - t0, 1)
    assert ok


def test_criterion_2_system_residual(capsys):
    t0 = time.perf_counter()
    res = max(oracle.appendix_coefficients(e).residual() for e in (1.0, 0.5, 0.1, 0.01, 0.001))
    ok = report(capsys, 2, res <= 1e-10, f"max residual {res:.2e}", time.perf_counter() - t0, 1)
    assert ok


def test_criterion_3_exact_rate(capsys):
    t0 = time.perf_counter()
    dense = np.logspace(-4, -1, 31)
    ratio = np.array([oracle.appendix_h1_error(e) / (2 * e / (1 + e)) for e in dense])
    spread = float(np.abs(ratio / ratio[0] - 1).max())
    decades = np.array([1e-1, 1e-2, 1e-3, 1e-4])
    slope = harness.fit_slope(decades, [oracle.appendix_h1_error(e) for e in decades]).slope
    ok = report(capsys, 3, spread <= 1e-8 and abs(slope - 1) <= 1e-3,
                f"ratio spread {spread:.2e}, log-log slope {slope:.5f}", time.perf_counter() - t0, 1)
    assert ok


def test_criterion_4_solver_against_oracle(capsys):
    t0 = time.perf_counter()
    rep = harness.converge_elliptic((32, 64, 128), (0.1, 0.0))
    ratios = rep.extra["ratios"]
    paths = {r["epsilon"]: r["path"] for r in rep.rows}
    ok = bool(np.all(np.abs(ratios - 4) <= 0.8)) and paths == {0.1: "regular", 0.0: "degenerate"}
    detail = f"ratios regular {np.round(ratios[:, 0], 4).tolist()}, degenerate {np.round(ratios[:, 1], 4).tolist()}"
    ok = report(capsys, 4, ok, detail, time.perf_counter() - t0, 10)
    assert ok


def test_criterion_5_degenerate_invariants(capsys):
    t0 = time.perf_counter()
    stack = oracle.appendix_stack(0.0)
    grid = make_grid(stack, 32, 64)
    inner = (grid.z > -3) & (grid.z < -1)
    u_max = dzero = div_rel = 0.0
    for seed in range(5):
        psi = initial_condition(grid, SimConfig(initial="random", amplitude=1.0, seed=seed))
        solver = PressureSolver(stack, grid)
        sol = solver.solve(ScalarField(grid, psi))
        ux, uz = velocity(stack, grid, sol.p, ScalarField(grid, psi))
        u_max = max(u_max, np.abs(ux.values[:, inner]).max(), np.abs(uz.values[:, inner]).max())
        p0, psi0 = sol.coeffs[0].real, psi.mean(axis=0)
        dzero = max(dzero, np.abs(np.diff(p0) / grid.h + 0.5 * (psi0[1:] + psi0[:-1])).max())
        div = divergence_hat(solver, rfft(sol.p.values), rfft(psi))
        unorm = math.hypot(est.l2_norm(grid, ux.values), est.l2_norm(grid, uz.values))
        div_rel = max(div_rel, np.abs(div).max() / unorm)
    ok = u_max == 0.0 and dzero <= 1e-12 and div_rel <= 1e-10
    ok = report(capsys, 5, ok, f"max |u| in layer {u_max:.1e}, p0' + psi0 {dzero:.1e}, div/|u| {div_rel:.1e}",
                time.perf_counter() - t0, 5)
    assert ok


def test_criterion_6_eps_uniform_pressure(capsys):
    t0 = time.perf_counter()
    eps_list = (1.0, 1e-1, 1e-2, 1e-3, 0.0)
    grid = make_grid(oracle.appendix_stack(1.0), 32, 32)
    solvers = [PressureSolver(oracle.appendix_stack(e), grid) for e in eps_list]
    worst = 0.0
    for seed in range(20):
        psi = initial_condition(grid, SimConfig(initial="random", amplitude=1.0, seed=100 + seed))
        r = [est.h1_norm(grid, s.solve(ScalarField(grid, psi)).p.values) / est.l2_norm(grid, psi) for s in solvers]
        worst = max(worst, max(r) / min(r))
    ok = report(capsys, 6, worst <= 2.0, f"max over fields of max/min ratio {worst:.4f}", time.perf_counter() - t0, 30)
    assert ok


@pytest.mark.slow
def test_criterion_7_energy_inequalities(capsys):
    t0 = time.perf_counter()
    cfg = default_config()
    reports = []
    for c in (cfg, cfg.refined(2)):
        stack, grid, profile = c.build()
        traj = simulate(stack, profile, replace(c.sim, keep_states=False), grid)
        consts = est.compute_constants(stack, profile, traj.initial_l2, c.m4_constant)
        reports.append((traj, est.check_trajectory(traj, consts, tol_scale=c.tol_scale)))
    (tr0, r0), (tr1, r1) = reports
    names = ("per_step", "envelope", "integrated")
    holds = all(r.result(n).passed for r in (r0, r1) for n in names) and not (tr0.failed or tr1.failed)
    shrinks = r1.energy_defect < r0.energy_defect
    detail = (f"violations {[r0.result(n).worst_violation for n in names]}, "
              f"energy defect {r0.energy_defect:.3e} -> {r1.energy_defect:.3e}")
    ok = report(capsys, 7, holds and shrinks, detail, time.perf_counter() - t0, 300)
    assert ok


@pytest.mark.slow
def test_criterion_8_dynamic_rate(capsys):
    t0 = time.perf_counter()
    fine, coarse, dm, _ = harness.m7_stability(default_config(), DYNAMIC_EPS, 1.0)
    slope = fine.slope("combined_T")
    ok = 0.85 <= slope <= 1.15 and math.isfinite(fine.M7) and dm < 0.10 and not fine.notes
    detail = f"slope {slope:.4f}, M7 {fine.M7:.5f} (coarse {coarse.M7:.5f}, change {100 * dm:.3f}%)"
    ok = report(capsys, 8, ok, detail, time.perf_counter() - t0, 1800)
    assert ok


@pytest.mark.slow
def test_criterion_9_determinism(capsys, tmp_path):
    t0 = time.perf_counter()
    out = []
    for name in ("a", "b"):
        d = tmp_path / name
        code = main(["converge", "--mode", "dynamic", "--epsilons", str(DYNAMIC_EPS[0]), "--T", "1",
                     "--workers", "1", "--out", str(d)])
        out.append((code, (d / "dynamic.csv").read_bytes()))
    ok = out[0][0] == out[1][0] == 0 and out[0][1] == out[1][1]
    ok = report(capsys, 9, ok, f"CSV identical: {out[0][1] == out[1][1]}", time.perf_counter() - t0, 120)
    assert ok
