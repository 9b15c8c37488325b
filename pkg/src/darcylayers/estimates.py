"""Explicit constants of the energy estimates, discrete norms and trajectory checks.

All norms are discrete analogues on the node grid: trapezoid weights in ``z``
(the finite-volume widths), the periodic rule in ``x``.  Gradients in ``z``
are cell differences, so ``||sqrt(D) grad psi||^2`` equals the quadratic form
of the implicit diffusion operator used by the time stepper.
"""
from __future__ import annotations

import decimal
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .domain import BackgroundProfile, LayerStack
from .fields import Grid, rfft

# M5 is a double exponential of the problem data and overflows a float for any
# realistic input; it is carried as a Decimal with an unbounded exponent range.
_M5_CONTEXT = decimal.Context(prec=30, Emax=decimal.MAX_EMAX, Emin=decimal.MIN_EMIN)


@dataclass(frozen=True)
class EstimateConstants:
    M1: float
    M2: float
    M3: float
    M4: float
    M5: decimal.Decimal
    T1: float
    c_delta: float
    period: float
    delta: float
    min_D: float
    max_D: float
    max_K: float
    depth: float
    m4_constant: float = 16.0

    @property
    def absorbing_l2(self) -> float:
        """Radius squared ``M1 H^2 / min D + 1`` of the L^2 absorbing ball."""
        return self.M1 * self.depth**2 / self.min_D + 1.0

    @property
    def log10_M5(self) -> float:
        return float(self.M5.log10(_M5_CONTEXT))

    @property
    def decay_rate(self) -> float:
        return self.min_D / self.depth**2


def compute_constants(stack: LayerStack, profile: BackgroundProfile, psi_in_norm: float = 0.0,
                      m4_constant: float = 16.0) -> EstimateConstants:
    """Constants of the L^2 and H^1 estimates.

    ``max K`` is taken over admissible ``epsilon <= 1``.  ``psi_in_norm`` is the
    L^2 norm of the initial data and only enters ``T1``.
    """
    c = profile.c_delta
    L = stack.horizontal_period
    H = stack.depth
    delta = profile.delta
    dmin = min(stack.diffusivities)
    dmax = max(stack.diffusivities)
    kmax = stack.max_permeability()
    M1 = 8.0 * c * c * L * dmax * dmax / (delta * dmin)
    M2 = 8.0 * c * c * L * dmax * dmax / delta**3
    M3 = 8.0 * c * c * kmax * kmax / dmin
    M4 = m4_constant * kmax**4
    r = M1 * H * H / dmin + 1.0
    with decimal.localcontext(_M5_CONTEXT):
        D = decimal.Decimal
        M5 = (D(M2) + D(r)) * (D(M3) + D(M4) * D(r) * D(r)).exp()
    T1 = 0.0
    if psi_in_norm > 1.0:
        T1 = 2.0 * H * H / dmin * math.log(psi_in_norm)
    return EstimateConstants(M1, M2, M3, M4, M5, T1, c, L, delta, dmin, dmax, kmax, H, m4_constant)


# -- discrete norms --------------------------------------------------------------

def inner(grid: Grid, f: np.ndarray, g: np.ndarray) -> float:
    """Discrete ``(f, g)_{L^2}``."""
    return float(grid.dx * np.sum(f * g * grid.widths[None, :]))


def l2_norm(grid: Grid, values: np.ndarray) -> float:
    return math.sqrt(max(inner(grid, values, values), 0.0))


def mode_l2_norm(grid: Grid, coeffs: np.ndarray) -> float:
    """L^2 norm from half-spectrum coefficients (Parseval)."""
    s = (grid.mode_weights[:, None] * np.abs(coeffs) ** 2 * grid.widths[None, :]).sum()
    return math.sqrt(grid.period * s)


def _x_derivative_sq(grid: Grid, values: np.ndarray, node_weight=None) -> float:
    c = rfft(values)
    k2 = grid.wavenumbers**2
    k2[-1] = 0.0
    w = grid.widths if node_weight is None else grid.widths * node_weight
    return float(grid.period * (grid.mode_weights[:, None] * k2[:, None] * np.abs(c) ** 2 * w[None, :]).sum())


def _z_derivative_sq(grid: Grid, values: np.ndarray, cell_weight=None) -> float:
    h = grid.h
    w = h if cell_weight is None else h * cell_weight
    return float(grid.dx * np.sum((np.diff(values, axis=-1) / h) ** 2 * w))


def gradient_sq(grid: Grid, values: np.ndarray) -> float:
    return _x_derivative_sq(grid, values) + _z_derivative_sq(grid, values)


def h1_norm(grid: Grid, values: np.ndarray) -> float:
    return math.sqrt(inner(grid, values, values) + gradient_sq(grid, values))


def dissipation(stack: LayerStack, grid: Grid, values: np.ndarray) -> float:
    """``||sqrt(D) grad psi||^2`` with the stepper's stencil."""
    D_cell = grid.cell_values(stack, stack.diffusivities)
    D_node = grid.node_average(D_cell)
    return _x_derivative_sq(grid, values, D_node) + _z_derivative_sq(grid, values, D_cell)


def _face_h1_sq(grid: Grid, face: np.ndarray) -> float:
    # H^1 of a cell-centred quantity: L^2 with cell widths, x-derivative
    # spectral, z-derivative by differences between cell centres.
    h = grid.h
    l2 = grid.dx * np.sum(face**2 * h)
    c = rfft(face)
    k2 = grid.wavenumbers**2
    k2[-1] = 0.0
    dx2 = grid.period * (grid.mode_weights[:, None] * k2[:, None] * np.abs(c) ** 2 * h[None, :]).sum()
    zm = grid.z_mid
    dz2 = grid.dx * np.sum((np.diff(face, axis=-1) / np.diff(zm)) ** 2 * np.diff(zm))
    return float(l2 + dx2 + dz2)


def w_norm(stack: LayerStack, grid: Grid, values: np.ndarray) -> float:
    """``||psi||_{H^1} + ||d_x psi||_{H^1} + ||D d_z psi||_{H^1}``."""
    from .fields import ddx

    D_cell = grid.cell_values(stack, stack.diffusivities)
    dxpsi = ddx(values, grid.period)
    flux = D_cell * np.diff(values, axis=-1) / grid.h
    return h1_norm(grid, values) + h1_norm(grid, dxpsi) + math.sqrt(_face_h1_sq(grid, flux))


def l_op_norm(stack: LayerStack, grid: Grid, values: np.ndarray) -> float:
    """``||L psi||_{L^2}`` over the interior nodes."""
    from .transport import apply_L_values

    Lpsi = apply_L_values(stack, grid, values)
    return l2_norm(grid, Lpsi)


# -- diagnostics -------------------------------------------------------------------

@dataclass
class DiagnosticsRecord:
    time: float
    psi_l2: float
    grad_l2: float
    """``||sqrt(D) grad psi||``."""
    psi_w: float
    L_psi: float
    p_h1: float
    u_l2: float
    max_divergence: float
    slack: dict = field(default_factory=dict)

    def row(self) -> dict:
        out = {k: v for k, v in asdict(self).items() if k != "slack"}
        out.update({f"slack_{k}": v for k, v in self.slack.items()})
        return out


@dataclass
class StepRecord:
    """Energy bookkeeping of one accepted time step."""

    time: float
    """Time at the end of the step."""
    dt: float
    energy_old: float
    energy_new: float
    dissipation: float
    """Scheme-consistent ``||sqrt(D) grad psi||^2`` of the step."""
    work: float
    """``2 [(-phi_b' u_z, psi) + (D phi_b'', psi)]`` at the step's time level."""
    method: str

    @property
    def rate(self) -> float:
        return (self.energy_new - self.energy_old) / self.dt

    @property
    def energy_defect(self) -> float:
        """Residual of the continuous energy identity evaluated on the discrete step."""
        return self.rate + 2.0 * self.dissipation - self.work


def tol_disc(dt: float, h: float, psi_w: float, scale: float = 10.0) -> float:
    """Discretisation allowance ``scale (dt + h^2)(1 + ||psi||_W^2)``."""
    return scale * (dt + h * h) * (1.0 + psi_w * psi_w)


@dataclass
class InequalityResult:
    name: str
    passed: bool
    worst_margin: float
    """Smallest ``bound - lhs`` seen (negative means violated before tolerance)."""
    worst_violation: float
    """Largest ``max(0, lhs - bound)``; must stay below ``tol``."""
    tol: float
    checked: int


@dataclass
class EstimateReport:
    results: list[InequalityResult]
    energy_defect: float
    """Largest relative energy-identity residual over the steps."""
    rows: list[dict] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def result(self, name: str) -> InequalityResult:
        for r in self.results:
            if r.name == name:
                return r
        raise KeyError(name)

    def summary_lines(self) -> list[str]:
        out = []
        for r in self.results:
            flag = "PASS" if r.passed else "FAIL"
            out.append(
                f"{flag} {r.name}: checked={r.checked} worst_margin={r.worst_margin:.6e} "
                f"worst_violation={r.worst_violation:.3e} tol={r.tol:.3e}"
            )
        out.append(f"energy identity defect (relative) = {self.energy_defect:.3e}")
        return out


def _result(name, lhs, bound, tol):
    lhs = np.asarray(lhs, dtype=float)
    bound = np.asarray(bound, dtype=float)
    tol = np.broadcast_to(np.asarray(tol, dtype=float), lhs.shape)
    if lhs.size == 0:
        return InequalityResult(name, True, math.inf, 0.0, 0.0, 0)
    margin = bound - lhs
    viol = np.maximum(0.0, -margin)
    ok = bool(np.all(np.isfinite(lhs)) and np.all(viol <= tol))
    i = int(np.argmax(viol - tol))
    return InequalityResult(name, ok, float(margin.min()), float(viol.max()), float(tol[i]), int(lhs.size))


def check_trajectory(traj, consts: EstimateConstants, *, tol_scale: float = 10.0) -> EstimateReport:
    """Check the L^2 and H^1 estimates along a trajectory.

    ``traj`` needs ``steps`` (a list of :class:`StepRecord`), ``diagnostics``
    (a list of :class:`DiagnosticsRecord`), ``h`` (grid size) and
    ``initial_l2`` (``||psi_in||``).  Failures are reported, never raised.
    """
    steps: Sequence[StepRecord] = traj.steps
    diags: Sequence[DiagnosticsRecord] = traj.diagnostics
    h = traj.h
    e0 = traj.initial_l2**2
    psi_w = {round(d.time, 12): d.psi_w for d in diags}
    w_max = max(psi_w.values()) if psi_w else 0.0

    t = np.array([s.time for s in steps])
    dt = np.array([s.dt for s in steps])
    rate = np.array([s.rate for s in steps])
    diss = np.array([s.dissipation for s in steps])
    energy = np.array([s.energy_new for s in steps])
    tol_step = tol_disc(dt, h, w_max, tol_scale) if len(steps) else np.zeros(0)

    results = []
    # (i) per-step differential inequality
    results.append(_result("per_step", rate + diss, np.full_like(rate, consts.M1), tol_step))

    # (ii) exponential envelope
    lam = consts.decay_rate
    decay = np.exp(-lam * t)
    env = e0 * decay + consts.M1 / lam * (1.0 - decay)
    tol_env = tol_disc(dt.max() if len(dt) else 0.0, h, w_max, tol_scale)
    results.append(_result("envelope", energy, env, tol_env))

    # (iii) time-integrated dissipation
    integ = np.cumsum(diss * dt)
    results.append(_result("integrated", integ, consts.M1 * t + e0, tol_env * np.maximum(t, 1.0)))

    # (iv) absorbing bounds after T1 (+1 for the H^1 bound)
    late = t >= consts.T1
    results.append(_result("absorbing_l2", energy[late], np.full(late.sum(), consts.absorbing_l2), tol_env))
    window = []
    for i in np.flatnonzero(late):
        sel = (t > t[i]) & (t <= t[i] + 1.0 + 1e-12)
        if t[-1] >= t[i] + 1.0 - 1e-12:
            window.append(float(np.sum(diss[sel] * dt[sel])))
    results.append(_result("absorbing_integral", window, np.full(len(window), consts.absorbing_l2), tol_env))
    grad_late = [d.grad_l2**2 for d in diags if d.time >= consts.T1 + 1.0]
    m5 = float(min(consts.M5, decimal.Decimal(np.finfo(float).max)))
    results.append(_result("absorbing_h1", grad_late, np.full(len(grad_late), m5), tol_env))

    # the Euler bootstrap step has an O(dt) defect by construction; only the
    # second-order steps measure how well the discrete energy law is resolved
    cn = [s for s in steps if s.method != "euler"]
    if cn:
        defect = np.abs([s.energy_defect for s in cn])
        scale = max(np.abs(s.rate) + 2.0 * s.dissipation + np.abs(s.work) for s in cn) + 1e-300
        rel = float(defect.max() / scale)
    else:
        rel = 0.0
    rows = [
        dict(time=float(t[i]), dt=float(dt[i]), lhs=float(rate[i] + diss[i]), bound=consts.M1,
             slack=float(consts.M1 - rate[i] - diss[i]), tol=float(tol_step[i]),
             envelope_margin=float(env[i] - energy[i]), integrated_margin=float(consts.M1 * t[i] + e0 - integ[i]),
             energy_defect=float(steps[i].energy_defect))
        for i in range(len(steps))
    ]
    return EstimateReport(results, rel, rows)
