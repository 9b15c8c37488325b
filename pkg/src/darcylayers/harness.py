"""Convergence experiments: solver against the closed form, and the rate in epsilon."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import estimates as est
from . import oracle
from .config import RunConfig
from .fields import ScalarField, make_grid
from .pressure import PressureSolver
from .transport import SimConfig, simulate


@dataclass
class SlopeFit:
    slope: float
    intercept: float
    residual: float
    """Root-mean-square residual of the least-squares fit in log space."""
    used: np.ndarray

    @property
    def n_used(self) -> int:
        return int(np.sum(self.used))


def fit_slope(epsilons, errors, floor: float = 0.0) -> SlopeFit:
    """Least squares of ``log error`` on ``log eps`` over the points above ``10 * floor``."""
    eps = np.asarray(epsilons, dtype=float)
    err = np.asarray(errors, dtype=float)
    used = (eps > 0) & (err > 10.0 * floor) & (err > 0) & np.isfinite(err)
    if used.sum() < 2:
        return SlopeFit(math.nan, math.nan, math.nan, used)
    x, y = np.log(eps[used]), np.log(err[used])
    A = np.stack([x, np.ones_like(x)], axis=1)
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    res = y - (slope * x + intercept)
    return SlopeFit(float(slope), float(intercept), float(np.sqrt(np.mean(res**2))), used)


@dataclass
class ConvergenceReport:
    epsilon_list: np.ndarray
    errors: dict
    """Error name -> array over ``epsilon_list``."""
    slopes: dict
    """Error name -> :class:`SlopeFit`."""
    resolution: dict
    rows: list = field(default_factory=list)
    floor: float = 0.0
    M7: float = math.nan
    notes: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def slope(self, name: str) -> float:
        return self.slopes[name].slope

    def monotone(self, name: str) -> bool:
        """Errors decrease with epsilon (ignoring exact zeros)."""
        e = self.errors[name]
        order = np.argsort(self.epsilon_list)
        v = e[order]
        v = v[self.epsilon_list[order] > 0]
        return bool(np.all(np.diff(v) >= 0))


# -- elliptic study -----------------------------------------------------------

def mode_one_profile(epsilon: float, nz_per_layer: int, nx: int = 8):
    """Numerical mode-1 pressure profile on the example's geometry.

    Returns ``(z_example, profile, grid, p_field)`` where ``z_example`` are the
    nodes in the example's coordinates.
    """
    stack = oracle.appendix_stack(epsilon)
    grid = make_grid(stack, nx, nz_per_layer)
    za = grid.z - oracle.Z_SHIFT
    psi = ScalarField(grid, oracle.psi_profile(za)[None, :] * np.cos(grid.x)[:, None])
    sol = PressureSolver(stack, grid).solve(psi)
    return za, 2.0 * sol.coeffs[1].real, grid, sol


def converge_elliptic(resolutions: Sequence[int] = (32, 64, 128),
                      epsilon_list: Sequence[float] = (1e-1, 1e-2, 1e-3, 1e-4, 0.0),
                      nx: int = 8) -> ConvergenceReport:
    """Grid convergence against the closed form, and the numerical epsilon-rate.

    The grid error is the largest nodal deviation of the mode-1 profile from
    the continuous-pressure closed form.  The epsilon error is the discrete
    ``||p^eps - p^0||_{H^1}`` at each resolution.
    """
    eps = np.asarray(epsilon_list, dtype=float)
    rows = []
    grid_err = np.zeros((len(resolutions), len(eps)))
    outer_err = np.zeros_like(grid_err)
    eps_err = np.zeros_like(grid_err)
    exact_eps = np.array([oracle.appendix_h1_error(e, "continuous") for e in eps])
    for i, n in enumerate(resolutions):
        za, p0, grid, sol0 = mode_one_profile(0.0, n, nx)
        for j, e in enumerate(eps):
            _, p1, _, sol = mode_one_profile(e, n, nx)
            exact = oracle.appendix_profile(e, za, "continuous")
            grid_err[i, j] = np.abs(p1 - exact).max()
            # on the permeable layers the printed closed form is the same function at eps = 0
            outer = (za > 1.0) | (za < -1.0)
            outer_err[i, j] = np.abs(p1 - oracle.appendix_profile(e, za, "printed"))[outer].max()
            eps_err[i, j] = est.h1_norm(grid, sol.p.values - sol0.p.values)
            rows.append(dict(nz_per_layer=n, epsilon=float(e), oracle_error=grid_err[i, j],
                             outer_printed_error=outer_err[i, j], eps_error=eps_err[i, j],
                             exact_eps_error=exact_eps[j], residual=float(sol.residuals.max()),
                             path=sol.path))
    ratios = grid_err[:-1] / grid_err[1:]
    fin = eps_err[-1]
    report = ConvergenceReport(
        eps, dict(eps_error=fin, exact_eps_error=exact_eps, oracle_error=grid_err[-1]),
        dict(eps_error=fit_slope(eps, fin), exact_eps_error=fit_slope(eps, exact_eps)),
        dict(resolutions=list(resolutions), nx=nx), rows,
    )
    report.extra = dict(grid_errors=grid_err, ratios=ratios, outer_printed_error=outer_err)
    return report


# -- dynamic study -----------------------------------------------------------------

@dataclass
class _RunResult:
    epsilon: float
    times: np.ndarray
    psi: list
    p: list
    ux: list
    uz: list
    failed: bool
    failure: str


def _run(args) -> _RunResult:
    cfg, eps, T = args
    stack, grid, profile = cfg.build(eps)
    sim = replace(cfg.sim, t_end=T, keep_states=True, checkpoint_every=0)
    tr = simulate(stack, profile, sim, grid)
    return _RunResult(eps, np.array(tr.times), [s.psi.values for s in tr.states], [s.p.values for s in tr.states],
                      [s.u_x.values for s in tr.states], [s.u_z.values for s in tr.states], tr.failed, tr.failure)


def _run_all(cfg: RunConfig, epsilons, T, workers: int):
    jobs = [(cfg, float(e), T) for e in epsilons]
    if workers <= 1 or cfg.sim.single_threaded:
        return [_run(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run, jobs))


def _distances(grid, a: _RunResult, b: _RunResult):
    n = min(len(a.times), len(b.times))
    if not np.allclose(a.times[:n], b.times[:n], rtol=0, atol=1e-12):
        raise ValueError("runs do not share output times")
    psi = np.array([est.l2_norm(grid, a.psi[i] - b.psi[i]) for i in range(n)])
    u = np.array([math.hypot(est.l2_norm(grid, a.ux[i] - b.ux[i]), est.l2_norm(grid, a.uz[i] - b.uz[i]))
                  for i in range(n)])
    p = np.array([est.h1_norm(grid, a.p[i] - b.p[i]) for i in range(n)])
    return psi, u, p


ERROR_NAMES = ("psi", "u", "p", "combined")


def converge_dynamic(cfg: RunConfig, epsilon_list: Sequence[float], T: float, *,
                     workers: Optional[int] = None, floor: str = "same-grid") -> ConvergenceReport:
    """Distance between the epsilon runs and the impermeable-layer run.

    Parameters
    ----------
    floor : ``"same-grid"`` measures the noise floor by rerunning the reference
        on the same grid; ``"self-refinement"`` uses the distance between the
        reference on this grid and on the grid refined once.
    """
    workers = cfg.workers if workers is None else workers
    eps = np.asarray(epsilon_list, dtype=float)
    stack0, grid, _ = cfg.build(0.0)
    runs = _run_all(cfg, [0.0, *eps], T, workers)
    ref = runs[0]
    notes = []
    if ref.failed:
        notes.append(f"reference run failed: {ref.failure}")
    terminal = {k: np.zeros(len(eps)) for k in ERROR_NAMES}
    sup = {k: np.zeros(len(eps)) for k in ERROR_NAMES}
    rows = []
    for j, r in enumerate(runs[1:]):
        if r.failed:
            notes.append(f"run eps={r.epsilon} failed: {r.failure}")
        dpsi, du, dp = _distances(grid, r, ref)
        comb = np.hypot(du, dpsi) + dp
        for name, series in zip(ERROR_NAMES, (dpsi, du, dp, comb)):
            terminal[name][j] = series[-1]
            sup[name][j] = series.max()
        rows.append(dict(epsilon=float(r.epsilon), **{f"{k}_T": float(terminal[k][j]) for k in ERROR_NAMES},
                         **{f"{k}_sup": float(sup[k][j]) for k in ERROR_NAMES}))

    if floor == "same-grid":
        again = _run((cfg, 0.0, T))
        floor_val = float(max(_distances(grid, again, ref)[0].max(), 0.0))
    elif floor == "self-refinement":
        fine = cfg.refined(2)
        rr = _run((fine, 0.0, T))
        # compare on the coarse nodes (every interior coarse node is a fine node)
        fz = fine.grid(fine.stack(0.0)).z
        iz = np.searchsorted(fz, grid.z)
        ix = np.arange(grid.nx) * 2
        sub = _RunResult(0.0, rr.times[: len(ref.times)], [v[np.ix_(ix, iz)] for v in rr.psi],
                         [v[np.ix_(ix, iz)] for v in rr.p], [v[np.ix_(ix, iz)] for v in rr.ux],
                         [v[np.ix_(ix, iz)] for v in rr.uz], rr.failed, rr.failure)
        floor_val = float(_distances(grid, sub, ref)[0].max())
    else:
        raise ValueError(f"unknown floor {floor!r}")

    errors = {**{f"{k}_T": terminal[k] for k in ERROR_NAMES}, **{f"{k}_sup": sup[k] for k in ERROR_NAMES}}
    slopes = {k: fit_slope(eps, v, floor_val) for k, v in errors.items()}
    pos = eps > 0
    M7 = float(np.max(sup["combined"][pos] / eps[pos])) if pos.any() else 0.0
    rep = ConvergenceReport(eps, errors, slopes,
                            dict(nx=grid.nx, nz=grid.nz, h=grid.h_max, dt=cfg.sim.dt, T=T), rows,
                            floor_val, M7, notes)
    if not rep.monotone("combined_T"):
        rep.notes.append("combined terminal error is not monotone in epsilon")
    return rep


def m7_stability(cfg: RunConfig, epsilon_list: Sequence[float], T: float, *, workers: Optional[int] = None):
    """Empirical M7 and epsilon-slope on ``cfg`` and on the grid coarsened once.

    Returns ``(fine_report, coarse_report, relative_M7_change, slope_change)``.
    """
    fine = converge_dynamic(cfg, epsilon_list, T, workers=workers)
    coarse = converge_dynamic(cfg.coarsened(2), epsilon_list, T, workers=workers)
    dm = abs(fine.M7 - coarse.M7) / fine.M7 if fine.M7 else 0.0
    ds = abs(fine.slope("combined_T") - coarse.slope("combined_T"))
    return fine, coarse, dm, ds


def long_run_distance(cfg: RunConfig, epsilon: float, T_long: float, T_window: float) -> dict:
    """Sup over a window of the L^2 distance between the epsilon and reference runs.

    Both start from the state the reference run reaches at ``T_long``.  The
    result is a diagnostic; it is compared with, but not asserted against, the
    sum of the two absorbing radii.
    """
    stack0, grid, profile0 = cfg.build(0.0)
    spin = simulate(stack0, profile0, replace(cfg.sim, t_end=T_long, keep_states=False), grid)
    start = spin.final.psi.values
    sim = replace(cfg.sim, t_end=T_window, keep_states=True)
    ref = simulate(stack0, profile0, sim, grid, start)
    if epsilon == 0.0:
        other = ref
    else:
        st, g, pr = cfg.build(epsilon)
        other = simulate(st, pr, sim, g, start)
    n = min(len(ref.states), len(other.states))
    d = [est.l2_norm(grid, ref.states[i].psi.values - other.states[i].psi.values) for i in range(n)]
    consts = est.compute_constants(stack0, profile0, est.l2_norm(grid, start), cfg.m4_constant)
    radius = 2.0 * math.sqrt(consts.absorbing_l2)
    return dict(epsilon=float(epsilon), distance=float(max(d)), bound=radius,
                T_long=T_long, T_window=T_window, failed=spin.failed or ref.failed or other.failed)
