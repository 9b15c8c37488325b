"""Time integration of the shifted concentration equation.

    d_t psi + u . grad psi + phi_b' u_z - div(D grad psi) = D phi_b'',
    psi = 0 at z = -H, 0,   u = -K (grad p + psi e_z).

Diffusion is implicit (Crank-Nicolson), advection, the background coupling
and the source are explicit (second-order Adams-Bashforth).  The first step,
and any step after a change of ``dt``, bootstraps with backward/forward Euler.
Since ``D`` depends on ``z`` only, the implicit part is one tridiagonal solve
per Fourier mode; all modes are stacked in a single banded factorisation.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import estimates as est
from .domain import BackgroundProfile, LayerStack, build_background_profile, build_layer_stack
from .fields import Grid, ScalarField, dealias_mask, ddz, irfft, load_field, rfft, save_field
from .pressure import PressureSolver, assemble_mode_operator, divergence_hat
from .tridiag import TridiagonalBatch, tridiagonal_matvec

log = logging.getLogger(__name__)

PRESETS = ("mode", "random", "zero", "file")


class SimulationError(RuntimeError):
    pass


@dataclass
class SimConfig:
    dt: float = 0.005
    t_end: float = 1.0
    cfl: float = 0.5
    initial: str = "mode"
    """One of ``mode``, ``random``, ``zero`` or ``file``."""
    amplitude: float = 0.1
    mode_x: int = 1
    mode_z: int = 1
    seed: int = 0
    initial_path: Optional[str] = None
    output_every: int = 10
    """Steps between recorded snapshots and diagnostics."""
    keep_states: bool = True
    checkpoint_every: int = 0
    checkpoint_dir: Optional[str] = None
    advection: bool = True
    single_threaded: bool = True

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.t_end < 0:
            raise ValueError("t_end must be non-negative")
        if not 0 < self.cfl:
            raise ValueError("cfl must be positive")
        if self.initial not in PRESETS:
            raise ValueError(f"unknown initial condition {self.initial!r}; choose from {PRESETS}")
        if self.output_every < 1:
            raise ValueError("output_every must be >= 1")


@dataclass
class FlowState:
    psi: ScalarField
    p: ScalarField
    u_x: ScalarField
    u_z: ScalarField
    uz_face: np.ndarray = field(repr=False)
    time: float = 0.0
    epsilon: float = 0.0
    step: int = 0
    p_hat: Optional[np.ndarray] = field(default=None, repr=False)


def initial_condition(grid: Grid, config: SimConfig) -> np.ndarray:
    """Initial ``psi`` satisfying the Dirichlet conditions."""
    x = grid.x[:, None]
    s = (grid.z[None, :] + grid.depth) / grid.depth  # 0 at the bottom, 1 at the top
    L = grid.period
    if config.initial == "zero":
        return np.zeros(grid.shape)
    if config.initial == "mode":
        return config.amplitude * np.cos(2 * np.pi * config.mode_x * x / L) * np.sin(np.pi * config.mode_z * s)
    if config.initial == "random":
        rng = np.random.default_rng(config.seed)
        out = np.zeros(grid.shape)
        for m in range(0, 4):
            for n in range(1, 5):
                a, b = rng.standard_normal(2) / (1 + m * m + n * n)
                out += (a * np.cos(2 * np.pi * m * x / L) + b * np.sin(2 * np.pi * m * x / L)) * np.sin(np.pi * n * s)
        return config.amplitude * out / max(np.abs(out).max(), 1e-300)
    if config.initial_path is None:
        raise ValueError("initial='file' needs initial_path")
    f = load_field(config.initial_path)
    if f.grid.shape != grid.shape or not np.array_equal(f.grid.z, grid.z):
        raise ValueError("initial field grid does not match the simulation grid")
    return f.values.copy()


def apply_L_values(stack: LayerStack, grid: Grid, values: np.ndarray) -> np.ndarray:
    """``-div(D grad psi)`` at the interior nodes (boundary rows are zero)."""
    D_cell = grid.cell_values(stack, stack.diffusivities)
    ops = assemble_mode_operator(grid.z, grid.wavenumbers**2, D_cell)
    c = tridiagonal_matvec(*ops, rfft(values)) / grid.widths[None, :]
    c[:, 0] = 0.0
    c[:, -1] = 0.0
    return irfft(c, grid.nx)


def apply_L(stack: LayerStack, psi: ScalarField) -> ScalarField:
    """Conservative ``-div(D grad psi)``; fluxes ``D d_z psi`` are continuous across interfaces."""
    return ScalarField(psi.grid, apply_L_values(stack, psi.grid, psi.values), "psi", psi.time, psi.epsilon)


class Stepper:
    """IMEX stepper for one stack, profile and grid; caches its factorisations per ``dt``."""

    def __init__(self, stack: LayerStack, profile: BackgroundProfile, grid: Grid, *, advection: bool = True):
        if not np.array_equal(profile.z, grid.z):
            raise ValueError("profile and grid use different z nodes")
        self.stack, self.profile, self.grid = stack, profile, grid
        self.advection = advection
        self.solver = PressureSolver(stack, grid)
        self.D_cell = grid.cell_values(stack, stack.diffusivities)
        self.D_node = grid.node_average(self.D_cell)
        self.k = grid.wavenumbers
        self.ops = assemble_mode_operator(grid.z, self.k**2, self.D_cell)
        self.mass = grid.widths
        self.mask = dealias_mask(grid.nx)
        self.source = self._source()
        self._factors: dict = {}

    def _source(self) -> np.ndarray:
        # exact control-volume average of D phi_b''
        z = self.grid.z
        zf = 0.5 * (z[1:] + z[:-1])
        _, d1_node, _ = self.profile.evaluate(z)
        _, d1_face, _ = self.profile.evaluate(zf)
        acc = np.zeros(len(z))
        acc[:-1] += self.D_cell * (d1_face - d1_node[:-1])
        acc[1:] += self.D_cell * (d1_node[1:] - d1_face)
        return acc / self.mass

    def _factor(self, dt: float, theta: float) -> TridiagonalBatch:
        key = (dt, theta)
        if key not in self._factors:
            lower, diag, upper = (theta * o for o in self.ops)
            diag = diag + self.mass[None, :] / dt
            for col in (0, -1):
                lower[:, col], diag[:, col], upper[:, col] = 0.0, 1.0, 0.0
            self._factors[key] = TridiagonalBatch(lower, diag, upper)
        return self._factors[key]

    # -- field evaluations -------------------------------------------------------
    def flow(self, psi: np.ndarray, time: float = 0.0, step: int = 0) -> FlowState:
        """Pressure and velocity for ``psi``."""
        g = self.grid
        eps = self.stack.epsilon
        p_hat, res = self.solver.solve_hat(rfft(psi))
        p = irfft(p_hat, g.nx)
        ux, uz, uz_face = self.solver.velocity(p, psi)
        mk = lambda v, tag: ScalarField(g, v, tag, time, eps)  # noqa: E731
        return FlowState(mk(psi, "psi"), mk(p, "p"), mk(ux, "u_x"), mk(uz, "u_z"), uz_face, time, eps, step, p_hat)

    def explicit(self, state: FlowState) -> np.ndarray:
        """Half-spectrum coefficients of ``-(u . grad psi + phi_b' u_z) + D phi_b''``."""
        g = self.grid
        psi, uz = state.psi.values, state.u_z.values
        f = np.zeros((g.nx // 2 + 1, g.nz), dtype=complex)
        if self.advection:
            keep = self.mask[:, None]
            ph = rfft(psi) * keep
            k = self.k.copy()
            k[-1] = 0.0
            psi_x = irfft(1j * k[:, None] * ph, g.nx)
            psi_z = ddz(irfft(ph, g.nx), g.z)
            ux_f = irfft(rfft(state.u_x.values) * keep, g.nx)
            uz_f = irfft(rfft(uz) * keep, g.nx)
            f -= rfft(ux_f * psi_x + uz_f * psi_z) * keep
        f -= rfft(self.profile.dphi_b[None, :] * uz)
        f[0] += self.source
        return f

    def work(self, state: FlowState) -> float:
        """``2 [(-phi_b' u_z, psi) + (D phi_b'', psi)]``."""
        g = self.grid
        w = -self.profile.dphi_b[None, :] * state.u_z.values + self.source[None, :]
        return 2.0 * est.inner(g, w, state.psi.values)

    def quad(self, a_hat: np.ndarray, b_hat: Optional[np.ndarray] = None) -> float:
        """``(A a, b)`` summed over the full spectrum; equals ``||sqrt(D) grad a||^2`` when ``b = a``."""
        b_hat = a_hat if b_hat is None else b_hat
        Aa = tridiagonal_matvec(*self.ops, a_hat)
        s = (self.grid.mode_weights[:, None] * (Aa * np.conj(b_hat)).real).sum()
        return float(self.grid.period * s)

    # -- time step ---------------------------------------------------------------
    def advance(self, psi: np.ndarray, f_n: np.ndarray, f_prev: Optional[np.ndarray], dt: float,
                dt_prev: Optional[float]) -> tuple[np.ndarray, np.ndarray, str]:
        """One IMEX step of the modal coefficients; returns ``(psi_hat_new, psi_hat_old, method)``."""
        g = self.grid
        ph = rfft(psi)
        M = self.mass[None, :]
        if f_prev is None or dt_prev is None:
            theta, rhs_f, method = 1.0, f_n, "euler"
            rhs = M * ph / dt + M * rhs_f
        else:
            r = dt / dt_prev
            theta, method = 0.5, "cnab2"
            rhs_f = (1.0 + 0.5 * r) * f_n - 0.5 * r * f_prev
            rhs = M * ph / dt - 0.5 * tridiagonal_matvec(*self.ops, ph) + M * rhs_f
        rhs[:, 0] = 0.0
        rhs[:, -1] = 0.0
        new = self._factor(dt, theta).solve(rhs)
        new[0] = new[0].real
        new[-1] = new[-1].real
        return new, ph, method

    def cfl_number(self, state: FlowState, dt: float) -> float:
        g = self.grid
        ux = np.abs(state.u_x.values).max()
        uz = np.abs(state.uz_face).max() if state.uz_face.size else 0.0
        return dt * (ux / g.dx + uz / g.h.min())

    def step(self, state: FlowState, dt: float, f_prev=None, dt_prev=None):
        """One step from ``state``.

        Returns ``(new_state, f_n, record)`` where ``f_n`` is the explicit term
        at ``state`` (the history for the next Adams-Bashforth step).
        """
        f_n = self.explicit(state)
        new_hat, old_hat, method = self.advance(state.psi.values, f_n, f_prev, dt, dt_prev)
        psi_new = irfft(new_hat, self.grid.nx)
        psi_new[:, 0] = 0.0
        psi_new[:, -1] = 0.0
        if not np.all(np.isfinite(psi_new)):
            raise SimulationError(f"non-finite psi after step at t={state.time + dt:.6g}")
        new = self.flow(psi_new, state.time + dt, state.step + 1)
        e_old = est.inner(self.grid, state.psi.values, state.psi.values)
        e_new = est.inner(self.grid, psi_new, psi_new)
        if method == "euler":
            diss = self.quad(new_hat)
        else:
            diss = self.quad(0.5 * (new_hat + old_hat))
        work = 0.5 * (self.work(state) + self.work(new))
        rec = est.StepRecord(new.time, dt, e_old, e_new, diss, work, method)
        return new, f_n, rec

    def diagnostics(self, state: FlowState) -> est.DiagnosticsRecord:
        g, stack = self.grid, self.stack
        psi = state.psi.values
        div = divergence_hat(self.solver, state.p_hat, rfft(psi))
        u_l2 = math.hypot(est.l2_norm(g, state.u_x.values), est.l2_norm(g, state.u_z.values))
        return est.DiagnosticsRecord(
            time=state.time,
            psi_l2=est.l2_norm(g, psi),
            grad_l2=math.sqrt(max(est.dissipation(stack, g, psi), 0.0)),
            psi_w=est.w_norm(stack, g, psi),
            L_psi=est.l_op_norm(stack, g, psi),
            p_h1=est.h1_norm(g, state.p.values),
            u_l2=u_l2,
            max_divergence=float(np.abs(div).max()) if div.size else 0.0,
        )


def step(stack: LayerStack, profile: BackgroundProfile, state: FlowState, dt: float,
         stepper: Optional[Stepper] = None, f_prev=None, dt_prev=None) -> FlowState:
    """Advance ``state`` by one step (Euler when no history is given)."""
    stepper = stepper or Stepper(stack, profile, state.psi.grid)
    return stepper.step(state, dt, f_prev, dt_prev)[0]


@dataclass
class Trajectory:
    grid: Grid
    stack: LayerStack
    profile: BackgroundProfile
    config: SimConfig
    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    failed: bool = False
    failure: str = ""
    initial_l2: float = 0.0

    @property
    def h(self) -> float:
        return self.grid.h_max

    @property
    def final(self) -> FlowState:
        return self.states[-1]

    # -- persistence ---------------------------------------------------------------
    def save(self, directory) -> Path:
        d = Path(directory)
        (d / "snapshots").mkdir(parents=True, exist_ok=True)
        meta = dict(
            stack=dict(
                period=self.stack.horizontal_period, depth=self.stack.depth,
                interfaces=list(self.stack.interfaces), permeabilities=list(self.stack.permeabilities),
                diffusivities=list(self.stack.diffusivities), degenerate_layer=self.stack.degenerate_layer,
                epsilon=self.stack.epsilon,
            ),
            profile=dict(c_top=self.profile.c_top, c_bottom=self.profile.c_bottom, delta=self.profile.delta),
            config=asdict(self.config),
            nx=self.grid.nx, z=[float(v) for v in self.grid.z],
            failed=self.failed, failure=self.failure, initial_l2=self.initial_l2,
            h=self.h,
        )
        (d / "meta.json").write_text(json.dumps(meta, indent=2))
        write_csv(d / "diagnostics.csv", [r.row() for r in self.diagnostics])
        write_csv(d / "steps.csv", [dict(asdict(s)) for s in self.steps])
        for i, st in enumerate(self.states):
            save_field(st.psi, d / "snapshots" / f"psi_{i:05d}.bin")
        return d

    @classmethod
    def load(cls, directory) -> "Trajectory":
        d = Path(directory)
        meta = json.loads((d / "meta.json").read_text())
        s = meta["stack"]
        stack = build_layer_stack(s["period"], s["depth"], s["interfaces"], s["permeabilities"],
                                  s["diffusivities"], s["degenerate_layer"], s["epsilon"])
        grid = Grid(meta["nx"], np.array(meta["z"]), s["period"], s["depth"])
        pr = meta["profile"]
        profile = build_background_profile(stack, pr["c_top"], pr["c_bottom"], pr["delta"], grid.z)
        traj = cls(grid, stack, profile, SimConfig(**meta["config"]), failed=meta["failed"],
                   failure=meta["failure"], initial_l2=meta["initial_l2"])
        for row in read_csv(d / "steps.csv"):
            traj.steps.append(est.StepRecord(
                float(row["time"]), float(row["dt"]), float(row["energy_old"]), float(row["energy_new"]),
                float(row["dissipation"]), float(row["work"]), row["method"]))
        fields_ = [f.name for f in est.DiagnosticsRecord.__dataclass_fields__.values() if f.name != "slack"]
        for row in read_csv(d / "diagnostics.csv"):
            traj.diagnostics.append(est.DiagnosticsRecord(**{k: float(row[k]) for k in fields_}))
            traj.times.append(float(row["time"]))
        return traj


def write_csv(path, rows: list[dict]) -> None:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        if not rows:
            return
        w = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for k, v in r.items()})


def read_csv(path) -> list[dict]:
    path = Path(path)
    if not path.exists() or path.stat().st_size == 0:
        return []
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def save_checkpoint(directory, state: FlowState, f_prev: Optional[np.ndarray], dt_prev: Optional[float]) -> Path:
    """Write ``psi`` and the Adams-Bashforth history so a restart is bitwise identical."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    stem = d / f"checkpoint_{state.step:07d}"
    save_field(state.psi, stem.with_suffix(".psi.bin"))
    if f_prev is not None:
        g = state.psi.grid
        # real rows first, then imaginary rows: nx + 2 rows, which is even
        hist = np.concatenate([f_prev.real, f_prev.imag], axis=0)
        hg = Grid(hist.shape[0], g.z, g.period, g.depth)
        save_field(ScalarField(hg, hist, "N", state.time, state.epsilon), stem.with_suffix(".hist.bin"))
    (stem.with_suffix(".json")).write_text(json.dumps(dict(step=state.step, time=state.time, dt_prev=dt_prev)))
    return stem


def load_checkpoint(stem, stepper: Stepper):
    """Inverse of :func:`save_checkpoint`; returns ``(state, f_prev, dt_prev)``."""
    stem = Path(stem)
    info = json.loads(stem.with_suffix(".json").read_text())
    psi = load_field(stem.with_suffix(".psi.bin"))
    state = stepper.flow(psi.values, psi.time, info["step"])
    f_prev = None
    hist_path = stem.with_suffix(".hist.bin")
    if hist_path.exists():
        m = stepper.grid.nx // 2 + 1
        h = load_field(hist_path).values
        f_prev = h[:m] + 1j * h[m : 2 * m]
    return state, f_prev, info["dt_prev"]


def simulate(stack: LayerStack, profile: BackgroundProfile, config: SimConfig, grid: Grid,
             psi_in: Optional[np.ndarray] = None, *, restart=None) -> Trajectory:
    """Integrate to ``config.t_end``.

    A blow-up (non-finite values) ends the run early; the returned trajectory
    then has ``failed=True`` and the states recorded so far.
    """
    stepper = Stepper(stack, profile, grid, advection=config.advection)
    f_prev, dt_prev = None, None
    if restart is not None:
        state, f_prev, dt_prev = load_checkpoint(restart, stepper)
    else:
        psi0 = initial_condition(grid, config) if psi_in is None else np.array(psi_in, dtype=float)
        psi0[:, 0] = 0.0
        psi0[:, -1] = 0.0
        with np.errstate(invalid="ignore", over="ignore"):
            state = stepper.flow(psi0, 0.0, 0)
    traj = Trajectory(grid, stack, profile, config, initial_l2=est.l2_norm(grid, state.psi.values))

    def record(st):
        traj.times.append(st.time)
        traj.diagnostics.append(stepper.diagnostics(st))
        if config.keep_states or len(traj.states) < 2:
            traj.states.append(st)
        else:
            traj.states[-1] = st  # keep only the initial and the latest state

    with np.errstate(invalid="ignore", over="ignore"):
        record(state)
    dt = config.dt
    # fixed step grid: the n-th step ends at n*dt so runs with equal dt share their times exactly
    t_end = config.t_end
    n_done = 0
    while state.time < t_end * (1 - 1e-12) - 1e-14:
        dt_step = min(dt, t_end - state.time)
        while stepper.cfl_number(state, dt_step) > config.cfl:
            dt_step *= 0.5
            log.warning("CFL limit: halving dt to %.3e at t=%.6g", dt_step, state.time)
            if dt_step < 1e-12 * max(dt, 1.0):
                traj.failed, traj.failure = True, f"dt underflow at t={state.time:.6g}"
                return traj
        try:
            # non-finite values are caught and reported by the step itself
            with np.errstate(invalid="ignore", over="ignore"):
                new, f_n, rec = stepper.step(state, dt_step, f_prev, dt_prev)
        except SimulationError as exc:
            traj.failed, traj.failure = True, str(exc)
            return traj
        traj.steps.append(rec)
        f_prev, dt_prev = f_n, dt_step
        state = new
        n_done += 1
        if n_done % config.output_every == 0 or state.time >= t_end * (1 - 1e-12) - 1e-14:
            record(state)
        if config.checkpoint_every and config.checkpoint_dir and n_done % config.checkpoint_every == 0:
            save_checkpoint(config.checkpoint_dir, state, f_prev, dt_prev)
    return traj
