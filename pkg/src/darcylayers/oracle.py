"""Closed-form solution of the three-layer elliptic example.

Geometry (in the example's own coordinates): ``Omega = (0, 2 pi) x (-2, 2)``,
interfaces at ``z = -1, 1``, ``K = 1`` outside and ``K = epsilon`` in the
middle layer.  The forcing is ``psi = psi_1(z) e^{ix}`` with ``psi_1``
piecewise linear through ``(-2, 0), (-1, 1), (1, -1), (2, 0)``.  In each layer
the pressure profile is ``a e^z + b e^{-z} + c`` with ``c`` the slope of
``psi_1`` there.

Two conventions are provided:

``"printed"``
    The reference six-equation system.  Its continuity rows match only the
    exponential parts, so the profile it defines jumps by the difference of
    the ``c`` constants at each interface.  The closed-form coefficients
    solve this system.
``"continuous"``
    The same system with the constants kept in the continuity rows, i.e. the
    genuine solution with a continuous pressure.  A nodal finite-volume solver
    converges to this one.  On the permeable layers at ``epsilon = 0`` the two
    conventions coincide.

The slab used by the simulator is ``(-4, 0)``; :func:`appendix_stack`
builds it with interfaces at ``-3`` and ``-1`` (a shift of ``-2``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .domain import LayerStack, build_layer_stack

E = math.e
# psi_1 at z = 2, 1, -1, -2 and its slope in the upper, middle and lower layer
PSI_TOP, PSI_UPPER, PSI_LOWER, PSI_BOTTOM = 0.0, -1.0, 1.0, 0.0
C_PLUS, C_ZERO, C_MINUS = 1.0, -1.0, 1.0
Z_SHIFT = -2.0


@dataclass(frozen=True)
class AppendixCoefficients:
    a_plus: float
    b_plus: float
    a_zero: float
    b_zero: float
    a_minus: float
    b_minus: float
    epsilon: float
    c_plus: float = C_PLUS
    c_zero: float = C_ZERO
    c_minus: float = C_MINUS
    convention: str = "printed"

    def vector(self) -> np.ndarray:
        """Unknowns in system order ``(a+, b+, a0, b0, a-, b-)``."""
        return np.array([self.a_plus, self.b_plus, self.a_zero, self.b_zero, self.a_minus, self.b_minus])

    def residual(self) -> float:
        A, rhs = appendix_system(self.epsilon, self.convention)
        return float(np.abs(A @ self.vector() - rhs).max())


def appendix_system(epsilon: float, convention: str = "printed") -> tuple[np.ndarray, np.ndarray]:
    """The 6x6 linear system for ``(a+, b+, a0, b0, a-, b-)``.

    Rows: zero flux at ``z = 2`` and ``z = -2``, continuity at ``z = 1`` and
    ``z = -1``, flux continuity at ``z = 1`` and ``z = -1``.
    """
    eps = float(epsilon)
    e = E
    A = np.array(
        [
            [e**2, -(e**-2), 0, 0, 0, 0],
            [0, 0, 0, 0, e**-2, -(e**2)],
            [e, 1 / e, -e, -1 / e, 0, 0],
            [0, 0, 1 / e, e, -1 / e, -e],
            [e, -1 / e, -eps * e, eps / e, 0, 0],
            [0, 0, eps / e, -eps * e, -1 / e, e],
        ]
    )
    rhs = np.array(
        [
            -PSI_TOP,
            -PSI_BOTTOM,
            0.0,
            0.0,
            (eps - 1.0) * PSI_UPPER,
            (1.0 - eps) * PSI_LOWER,
        ]
    )
    if convention == "continuous":
        rhs[2] = C_ZERO - C_PLUS
        rhs[3] = C_MINUS - C_ZERO
    elif convention != "printed":
        raise ValueError(f"unknown convention {convention!r}")
    return A, rhs


def appendix_coefficients(epsilon: float, *, check_tol: float = 1e-10) -> AppendixCoefficients:
    """Printed closed forms, cross-checked against a direct solve of the system."""
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    g = (epsilon - 1.0) / (epsilon + 1.0)
    denom = E * E - 1.0
    outer = g / (E * denom)
    middle = E * g / denom
    far = E**3 * g / denom
    coeffs = AppendixCoefficients(
        a_plus=outer, b_plus=far, a_zero=middle, b_zero=middle, a_minus=far, b_minus=outer,
        epsilon=float(epsilon),
    )
    A, rhs = appendix_system(epsilon)
    direct = np.linalg.solve(A, rhs)
    gap = np.abs(direct - coeffs.vector()).max()
    if gap > check_tol * max(1.0, np.abs(direct).max()):
        raise ArithmeticError(f"closed form disagrees with the linear system by {gap:.3e}")
    return coeffs


def continuous_coefficients(epsilon: float) -> AppendixCoefficients:
    """Coefficients of the solution with a continuous pressure (direct 6x6 solve)."""
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    A, rhs = appendix_system(epsilon, "continuous")
    v = np.linalg.solve(A, rhs)
    return AppendixCoefficients(*v, epsilon=float(epsilon), convention="continuous")


def _coefficients(epsilon, convention):
    if convention == "printed":
        return appendix_coefficients(epsilon)
    return continuous_coefficients(epsilon)


def psi_profile(z) -> np.ndarray:
    """``psi_1`` in the example's coordinates ``z in [-2, 2]``."""
    return np.interp(np.asarray(z, dtype=float), [-2.0, -1.0, 1.0, 2.0],
                     [PSI_BOTTOM, PSI_LOWER, PSI_UPPER, PSI_TOP])


def _layer(z):
    # upper layer owns z = 1, middle owns z = -1 (interfaces belong to the layer above)
    return np.where(z >= 1.0, 0, np.where(z >= -1.0, 1, 2))


def appendix_profile(epsilon: float, z, convention: str = "printed", derivative: bool = False) -> np.ndarray:
    """Pressure profile ``p_1(z)`` (or its derivative) for ``z in [-2, 2]``."""
    co = _coefficients(epsilon, convention)
    z = np.asarray(z, dtype=float)
    a = np.array([co.a_plus, co.a_zero, co.a_minus])
    b = np.array([co.b_plus, co.b_zero, co.b_minus])
    c = np.array([co.c_plus, co.c_zero, co.c_minus])
    i = _layer(z)
    if derivative:
        return a[i] * np.exp(z) - b[i] * np.exp(-z)
    return a[i] * np.exp(z) + b[i] * np.exp(-z) + c[i]


def appendix_pressure(epsilon: float, x, z, convention: str = "printed") -> np.ndarray:
    """``Re[p_1(z) e^{ix}]``."""
    return appendix_profile(epsilon, z, convention) * np.cos(np.asarray(x, dtype=float))


def _exp_part_h1_sq(da: np.ndarray, db: np.ndarray) -> float:
    # H^1 norm squared of the real field (da e^z + db e^-z) cos x over the three
    # layers: pi * int (2 d^2 + d'^2) dz, integrated exactly.
    bounds = [(1.0, 2.0), (-1.0, 1.0), (-2.0, -1.0)]
    total = 0.0
    for (lo, hi), A, B in zip(bounds, da, db):
        i_plus = 0.5 * (math.exp(2 * hi) - math.exp(2 * lo))
        i_minus = 0.5 * (math.exp(-2 * lo) - math.exp(-2 * hi))
        total += 3 * A * A * i_plus + 3 * B * B * i_minus + 2 * A * B * (hi - lo)
    return math.pi * total


def appendix_h1_error(epsilon: float, convention: str = "printed") -> float:
    """Exact ``||p^eps - p^0||_{H^1(Omega)}`` of the real fields ``p_1(z) cos x``."""
    ce = _coefficients(epsilon, convention)
    c0 = _coefficients(0.0, convention)
    da = np.array([ce.a_plus - c0.a_plus, ce.a_zero - c0.a_zero, ce.a_minus - c0.a_minus])
    db = np.array([ce.b_plus - c0.b_plus, ce.b_zero - c0.b_zero, ce.b_minus - c0.b_minus])
    return math.sqrt(max(_exp_part_h1_sq(da, db), 0.0))


def limit_exponential_norm(convention: str = "printed") -> float:
    """H^1 norm of the exponential part of ``p^0``."""
    c0 = _coefficients(0.0, convention)
    da = np.array([c0.a_plus, c0.a_zero, c0.a_minus])
    db = np.array([c0.b_plus, c0.b_zero, c0.b_minus])
    return math.sqrt(_exp_part_h1_sq(da, db))


def appendix_stack(epsilon: float) -> LayerStack:
    """The example's geometry as a simulator slab ``(0, 2 pi) x (-4, 0)``."""
    return build_layer_stack(
        2 * math.pi, 4.0, [-1.0 + Z_SHIFT, 1.0 + Z_SHIFT], [1.0, epsilon, 1.0], [1.0, 1.0, 1.0],
        degenerate_layer=1, epsilon=epsilon,
    )


def coefficient_table(epsilons) -> list[dict]:
    rows = []
    for eps in epsilons:
        co = appendix_coefficients(eps)
        rows.append(
            dict(epsilon=eps, a_plus=co.a_plus, b_plus=co.b_plus, a_zero=co.a_zero,
                 b_zero=co.b_zero, a_minus=co.a_minus, b_minus=co.b_minus,
                 residual=co.residual())
        )
    return rows
