"""Pressure solves and Darcy velocity.

Per horizontal Fourier mode ``k`` the pressure satisfies

    -(K (p' + psi))' + K k^2 p = 0,    K (p' + psi) = 0 at z = -H, 0,

with ``K (p' + psi)`` continuous across interfaces.  It is discretised by a
vertex-centred finite-volume scheme: unknowns on the z-nodes, fluxes on the
cells between them, ``psi`` averaged to cell centres.  Since interfaces are
nodes, every flux lives inside a single layer and flux continuity holds
exactly at the discrete level.

When one layer has ``K = 0`` the problem is degenerate.  ``solve_degenerate``
then builds the particular solution used in the limit analysis: the zero mode
from ``p_0' = -psi_0``, the nonzero modes by Neumann problems in the permeable
regions above and below, and the impermeable layer filled by the Dirichlet
problem ``-Lap p = d_z psi`` with the traces of the outer solutions.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .domain import ConfigurationError, LayerStack
from .fields import Grid, ScalarField, irfft, rfft
from .tridiag import SingularSystemError, TridiagonalBatch, tridiagonal_matvec


@dataclass
class PressureSolve:
    p: ScalarField
    coeffs: np.ndarray
    """Half-spectrum coefficients of ``p``, shape ``(nx//2 + 1, nz)``."""
    residuals: np.ndarray
    """Relative residual of the solved equations, one entry per mode."""
    path: str


def assemble_mode_operator(z: np.ndarray, k2, K_cell: np.ndarray):
    """Tridiagonal finite-volume operator of ``-(K p')' + K k^2 p`` with zero-flux ends.

    ``k2`` may be an array of squared wavenumbers; the result then has one
    row of diagonals per entry.  Returns ``(lower, diag, upper)``.
    """
    h = np.diff(z)
    a = np.asarray(K_cell, dtype=float) / h
    mass = np.zeros(len(z))
    mass[:-1] += 0.5 * K_cell * h
    mass[1:] += 0.5 * K_cell * h
    k2 = np.atleast_1d(np.asarray(k2, dtype=float))[:, None]
    stiff = np.zeros(len(z))
    stiff[:-1] += a
    stiff[1:] += a
    diag = stiff[None, :] + k2 * mass[None, :]
    lower = np.zeros_like(diag)
    upper = np.zeros_like(diag)
    lower[:, 1:] = -a
    upper[:, :-1] = -a
    return lower, diag, upper


def mode_forcing(z: np.ndarray, K_cell: np.ndarray, psi_k: np.ndarray) -> np.ndarray:
    """Right-hand side ``K psi`` flux differences for each node (last axis is z)."""
    flux = K_cell * 0.5 * (psi_k[..., 1:] + psi_k[..., :-1])
    rhs = np.zeros(psi_k.shape, dtype=np.result_type(psi_k, float))
    rhs[..., :-1] += flux
    rhs[..., 1:] -= flux
    return rhs


def _relative_residual(lower, diag, upper, x, rhs) -> np.ndarray:
    r = tridiagonal_matvec(lower, diag, upper, x) - rhs
    scale = np.abs(diag) * np.abs(x) + np.abs(rhs) + 1e-300
    return np.abs(r).max(axis=-1) / np.maximum(scale.max(axis=-1), 1e-300)


def _weighted_mean(z: np.ndarray, values: np.ndarray) -> np.ndarray:
    h = np.diff(z)
    w = np.zeros(len(z))
    w[:-1] += 0.5 * h
    w[1:] += 0.5 * h
    return (values * w).sum(axis=-1) / w.sum()


def solve_mode(z, k: float, K_cell, psi_k, *, compat_rtol: float = 1e-8) -> np.ndarray:
    """Solve one Fourier mode of the pressure problem with all ``K > 0``.

    Parameters
    ----------
    z : array, the vertical nodes (interfaces included).
    k : wavenumber (may be 0).
    K_cell : permeability of each cell between consecutive nodes.
    psi_k : complex (or real) vertical profile of the mode of psi.

    The ``k = 0`` problem is singular; it is solved with the first node
    pinned and then shifted to zero vertical mean.  Incompatible data would
    show up as a residual in the discarded row and raises
    :class:`SingularSystemError`.
    """
    z = np.asarray(z, dtype=float)
    K_cell = np.asarray(K_cell, dtype=float)
    psi_k = np.asarray(psi_k)
    if np.any(K_cell <= 0):
        raise ConfigurationError("solve_mode needs strictly positive permeability")
    lower, diag, upper = assemble_mode_operator(z, k * k, K_cell)
    rhs = mode_forcing(z, K_cell, psi_k)[None, :]
    if k != 0:
        return TridiagonalBatch(lower, diag, upper).solve(rhs.astype(complex) if np.iscomplexobj(rhs) else rhs)[0]
    return _solve_zero_mode(z, lower, diag, upper, rhs, compat_rtol)[0]


def _solve_zero_mode(z, lower, diag, upper, rhs, compat_rtol):
    pl, pd, pu = lower.copy(), diag.copy(), upper.copy()
    pd[:, 0], pu[:, 0] = 1.0, 0.0
    prhs = rhs.copy()
    prhs[:, 0] = 0.0
    p = TridiagonalBatch(pl, pd, pu).solve(prhs)
    row0 = diag[:, 0] * p[:, 0] + upper[:, 0] * p[:, 1] - rhs[:, 0]
    scale = np.abs(rhs).max() + np.abs(diag[:, :1] * p).max() + 1e-300
    if np.abs(row0).max() > compat_rtol * scale:
        raise SingularSystemError("zero-mode data incompatible with zero-flux boundaries")
    return p - _weighted_mean(z, p)[:, None]


class PressureSolver:
    """Pre-factored pressure solver for one stack and grid.

    Chooses the regular path when every layer is permeable and the degenerate
    construction when the stack's degenerate layer has ``epsilon = 0``.
    """

    def __init__(self, stack: LayerStack, grid: Grid):
        self.stack = stack
        self.grid = grid
        self.K_cell = grid.cell_values(stack, stack.permeabilities)
        self.K_node = grid.node_average(self.K_cell)
        k = grid.wavenumbers
        self.k2 = k * k
        z = grid.z
        if stack.is_degenerate:
            self.path = "degenerate"
            self._setup_degenerate()
        else:
            if np.any(self.K_cell <= 0):
                raise ConfigurationError("regular path needs all permeabilities positive")
            self.path = "regular"
            self._ops = assemble_mode_operator(z, self.k2, self.K_cell)
            lower, diag, upper = (o.copy() for o in self._ops)
            diag[0, 0], upper[0, 0] = 1.0, 0.0  # pin the singular zero mode
            self._fac = TridiagonalBatch(lower, diag, upper)

    # -- degenerate construction ------------------------------------------------
    def _setup_degenerate(self):
        stack, grid = self.stack, self.grid
        j = stack.degenerate_layer
        if j == 0 or j == stack.n_layers - 1:
            raise ConfigurationError(
                "the impermeable layer must have permeable layers on both sides"
            )
        zero_layers = [i for i, K in enumerate(stack.permeabilities) if K == 0]
        if len(zero_layers) > 1:
            raise ConfigurationError("more than one zero-permeability layer")
        z = grid.z
        ib = int(np.argmin(np.abs(z - stack.edges[j])))
        it = int(np.argmin(np.abs(z - stack.edges[j + 1])))
        if it - ib < 2:
            raise ConfigurationError("impermeable layer needs at least one interior node")
        self._ib, self._it = ib, it
        k2 = self.k2[1:]
        self._below = assemble_mode_operator(z[: ib + 1], k2, self.K_cell[:ib])
        self._above = assemble_mode_operator(z[it:], k2, self.K_cell[it:])
        self._fac_below = TridiagonalBatch(*self._below)
        self._fac_above = TridiagonalBatch(*self._above)
        lower, diag, upper = assemble_mode_operator(z[ib : it + 1], k2, np.ones(it - ib))
        self._inner = (lower.copy(), diag.copy(), upper.copy())
        for col in (0, -1):
            lower[:, col], diag[:, col], upper[:, col] = 0.0, 1.0, 0.0
        self._inner_dirichlet = (lower, diag, upper)
        self._fac_inner = TridiagonalBatch(lower, diag, upper)

    def _solve_degenerate(self, psi_hat):
        z = self.grid.z
        ib, it = self._ib, self._it
        p_hat = np.zeros_like(psi_hat)
        res = np.zeros(psi_hat.shape[0])

        # zero mode: p_0' = -psi_0 cell by cell, then zero mean
        psi0 = psi_hat[0].real
        p0 = np.concatenate([[0.0], -np.cumsum(np.diff(z) * 0.5 * (psi0[1:] + psi0[:-1]))])
        p_hat[0] = p0 - _weighted_mean(z, p0)

        rest = psi_hat[1:]
        Kb, Ka = self.K_cell[:ib], self.K_cell[it:]
        rhs_b = mode_forcing(z[: ib + 1], Kb, rest[:, : ib + 1])
        rhs_a = mode_forcing(z[it:], Ka, rest[:, it:])
        pb = self._fac_below.solve(rhs_b)
        pa = self._fac_above.solve(rhs_a)

        rhs_i = mode_forcing(z[ib : it + 1], np.ones(it - ib), rest[:, ib : it + 1])
        rhs_i[:, 0] = pb[:, -1]
        rhs_i[:, -1] = pa[:, 0]
        pi = self._fac_inner.solve(rhs_i)

        p_hat[1:, : ib + 1] = pb
        p_hat[1:, it:] = pa
        p_hat[1:, ib + 1 : it] = pi[:, 1:-1]

        r_b = _relative_residual(*self._below, pb, rhs_b)
        r_a = _relative_residual(*self._above, pa, rhs_a)
        r_i = _relative_residual(*self._inner_dirichlet, pi, rhs_i)
        res[1:] = np.maximum(np.maximum(r_b, r_a), r_i)
        return p_hat, res

    def _solve_regular(self, psi_hat):
        z = self.grid.z
        rhs = mode_forcing(z, self.K_cell, psi_hat)
        pinned = rhs.copy()
        pinned[0, 0] = 0.0
        p_hat = self._fac.solve(pinned)
        lower, diag, upper = self._ops
        row0 = diag[0, 0] * p_hat[0, 0] + upper[0, 0] * p_hat[0, 1] - rhs[0, 0]
        scale = np.abs(rhs[0]).max() + np.abs(diag[0] * p_hat[0]).max() + 1e-300
        if abs(row0) > 1e-8 * scale:
            raise SingularSystemError("zero-mode data incompatible with zero-flux boundaries")
        p_hat[0] -= _weighted_mean(z, p_hat[0].real)
        p_hat[0] = p_hat[0].real
        res = _relative_residual(lower, diag, upper, p_hat, rhs)
        return p_hat, res

    def solve_hat(self, psi_hat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Pressure coefficients from half-spectrum coefficients of psi."""
        psi_hat = np.asarray(psi_hat, dtype=complex)
        if self.path == "degenerate":
            return self._solve_degenerate(psi_hat)
        return self._solve_regular(psi_hat)

    def solve(self, psi: ScalarField) -> PressureSolve:
        p_hat, res = self.solve_hat(rfft(psi.values))
        p = ScalarField(self.grid, irfft(p_hat, self.grid.nx), "p", psi.time, self.stack.epsilon)
        return PressureSolve(p, p_hat, res, self.path)

    # -- velocity ----------------------------------------------------------------
    def face_flux(self, p: np.ndarray, psi: np.ndarray) -> np.ndarray:
        """``K (d_z p + psi)`` on every cell, shape ``(..., nz-1)``; works on physical or modal data."""
        h = self.grid.h
        return self.K_cell * (np.diff(p, axis=-1) / h + 0.5 * (psi[..., 1:] + psi[..., :-1]))

    def velocity_hat(self, p_hat, psi_hat):
        """Modal ``u_x`` on nodes and ``u_z`` on cells."""
        k = self.grid.wavenumbers.copy()
        k[-1] = 0.0  # the Nyquist mode carries no x-derivative
        ux = -1j * k[:, None] * self.K_node[None, :] * p_hat
        uz_face = -self.face_flux(p_hat, psi_hat)
        return ux, uz_face

    def velocity(self, p: np.ndarray, psi: np.ndarray):
        """Physical ``(u_x, u_z, u_z_face)``; ``u_z`` on nodes is the volume average of the cell values."""
        nx = self.grid.nx
        p_hat = rfft(p)
        psi_hat = rfft(psi)
        ux_hat, _ = self.velocity_hat(p_hat, psi_hat)
        ux = irfft(ux_hat, nx)
        uz_face = -self.face_flux(p, psi)
        uz = nodal_from_faces(self.grid, uz_face)
        return ux, uz, uz_face


def nodal_from_faces(grid: Grid, face: np.ndarray) -> np.ndarray:
    """Volume-weighted node values of a cell quantity; boundary nodes are set to zero."""
    h = grid.h
    out = np.zeros(face.shape[:-1] + (grid.nz,))
    out[..., 1:-1] = (0.5 * h[:-1] * face[..., :-1] + 0.5 * h[1:] * face[..., 1:]) / grid.widths[1:-1]
    return out


def divergence_hat(solver: PressureSolver, p_hat, psi_hat) -> np.ndarray:
    """Per-mode discrete divergence of the velocity on nodes (Nyquist mode excluded)."""
    grid = solver.grid
    ux, uz_face = solver.velocity_hat(p_hat, psi_hat)
    k = grid.wavenumbers
    flux_diff = np.zeros_like(ux)
    flux_diff[:, :-1] += uz_face
    flux_diff[:, 1:] -= uz_face
    # boundary cells carry zero flux through z = -H and z = 0
    div = 1j * k[:, None] * ux + flux_diff / grid.widths[None, :]
    return div[:-1]


def solve_regular(stack: LayerStack, grid: Grid, psi: ScalarField) -> PressureSolve:
    if stack.is_degenerate or min(stack.permeabilities) <= 0:
        raise ConfigurationError("solve_regular requires every permeability > 0")
    return PressureSolver(stack, grid).solve(psi)


def solve_degenerate(stack: LayerStack, grid: Grid, psi: ScalarField) -> PressureSolve:
    if not stack.is_degenerate:
        raise ConfigurationError("solve_degenerate requires a degenerate layer with epsilon = 0")
    return PressureSolver(stack, grid).solve(psi)


def solve_pressure(stack: LayerStack, grid: Grid, psi: ScalarField) -> PressureSolve:
    return PressureSolver(stack, grid).solve(psi)


def velocity(stack: LayerStack, grid: Grid, p: ScalarField, psi: ScalarField,
             solver: Optional[PressureSolver] = None):
    """Darcy velocity ``u = -K (grad p + psi e_z)`` as nodal fields ``(u_x, u_z)``."""
    solver = solver or PressureSolver(stack, grid)
    ux, uz, _ = solver.velocity(p.values, psi.values)
    t, eps = psi.time, stack.epsilon
    return ScalarField(grid, ux, "u_x", t, eps), ScalarField(grid, uz, "u_z", t, eps)
