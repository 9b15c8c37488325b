"""Layered slab geometry, material constants and the background profile.

The slab is ``(0, L) x (-H, 0)``, periodic in ``x``.  Layers are indexed from
the bottom: layer ``0`` occupies ``(-H, z_1)`` and layer ``l-1`` occupies
``(z_{l-1}, 0)``.  A node sitting exactly on an interface belongs to the layer
above it.

The physical constants (viscosity, reference density times expansion times
gravity, porosity) are all normalised to one and are not configurable.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np


class ConfigurationError(ValueError):
    """Raised when geometry or material data violate the model's invariants."""


@dataclass(frozen=True)
class LayerStack:
    horizontal_period: float
    depth: float
    interfaces: tuple[float, ...]
    permeabilities: tuple[float, ...]
    diffusivities: tuple[float, ...]
    degenerate_layer: Optional[int] = None
    epsilon: float = 0.0

    @property
    def n_layers(self) -> int:
        return len(self.permeabilities)

    @property
    def edges(self) -> np.ndarray:
        """Layer boundaries ``[-H, z_1, ..., z_{l-1}, 0]``."""
        return np.array([-self.depth, *self.interfaces, 0.0])

    @property
    def thicknesses(self) -> np.ndarray:
        return np.diff(self.edges)

    @property
    def is_degenerate(self) -> bool:
        """True when some layer is impermeable (``K = 0``)."""
        return self.degenerate_layer is not None and self.epsilon == 0.0

    def layer_of(self, z) -> np.ndarray:
        """Layer index of each height in ``z`` (interfaces go to the layer above)."""
        idx = np.searchsorted(np.asarray(self.interfaces), np.asarray(z, dtype=float), side="right")
        return idx

    def with_epsilon(self, epsilon: float) -> "LayerStack":
        """Same stack with the degenerate layer's permeability set to ``epsilon``."""
        if self.degenerate_layer is None:
            raise ConfigurationError("stack has no degenerate layer")
        perms = list(self.permeabilities)
        perms[self.degenerate_layer] = float(epsilon)
        return build_layer_stack(
            self.horizontal_period,
            self.depth,
            self.interfaces,
            perms,
            self.diffusivities,
            self.degenerate_layer,
            float(epsilon),
        )

    def max_permeability(self) -> float:
        """Largest permeability over admissible ``epsilon <= 1``."""
        fixed = [k for i, k in enumerate(self.permeabilities) if i != self.degenerate_layer]
        if self.degenerate_layer is not None:
            fixed.append(1.0)
        return max(fixed)


def build_layer_stack(
    period: float,
    depth: float,
    interfaces: Sequence[float],
    permeabilities: Sequence[float],
    diffusivities: Sequence[float],
    degenerate_layer: Optional[int] = None,
    epsilon: Optional[float] = None,
) -> LayerStack:
    """Validate and assemble a :class:`LayerStack`.

    If ``degenerate_layer`` is given and ``epsilon`` is not, epsilon is read
    from that layer's permeability entry; if both are given the entry is
    overwritten with ``epsilon``.
    """
    if not period > 0 or not depth > 0:
        raise ConfigurationError("period and depth must be positive")
    z = tuple(float(v) for v in interfaces)
    K = [float(v) for v in permeabilities]
    D = tuple(float(v) for v in diffusivities)
    if len(K) != len(z) + 1 or len(D) != len(z) + 1:
        raise ConfigurationError(
            f"{len(z)} interfaces need {len(z) + 1} permeabilities and diffusivities, "
            f"got {len(K)} and {len(D)}"
        )
    if any(b <= a for a, b in zip(z, z[1:])):
        raise ConfigurationError(f"interfaces must be strictly increasing: {z}")
    if z and (z[0] <= -depth or z[-1] >= 0.0):
        raise ConfigurationError("interfaces must lie strictly inside (-H, 0)")
    if any(d <= 0 for d in D):
        raise ConfigurationError("diffusivities must be strictly positive")

    if degenerate_layer is not None:
        if isinstance(degenerate_layer, (list, tuple)):
            if len(degenerate_layer) > 1:
                raise ConfigurationError("at most one layer may be degenerate")
            degenerate_layer = degenerate_layer[0] if degenerate_layer else None
    if degenerate_layer is not None:
        j = int(degenerate_layer)
        if not 0 <= j < len(K):
            raise ConfigurationError(f"degenerate layer index {j} out of range")
        if epsilon is None:
            epsilon = K[j]
        if epsilon < 0:
            raise ConfigurationError("epsilon must be non-negative")
        K[j] = float(epsilon)
        degenerate_layer = j
    else:
        epsilon = 0.0

    for i, k in enumerate(K):
        if k < 0:
            raise ConfigurationError(f"negative permeability in layer {i}")
        if k == 0 and i != degenerate_layer:
            raise ConfigurationError(
                f"layer {i} has zero permeability but is not the degenerate layer"
            )

    return LayerStack(float(period), float(depth), z, tuple(K), D, degenerate_layer, float(epsilon))


def max_delta(stack: LayerStack, c_delta: float) -> float:
    """Largest admissible transition-strip width.

    ``min D / (8 c_delta max K)``, capped at ``H/4`` so that the two strips and
    the plateau between them never overlap.
    """
    if c_delta < 0:
        raise ConfigurationError("c_delta must be non-negative")
    cap = stack.depth / 4.0
    if c_delta == 0:
        return cap
    bound = min(stack.diffusivities) / (8.0 * c_delta * stack.max_permeability())
    return min(bound, cap)


def default_delta(stack: LayerStack, c_top: float, c_bottom: float) -> float:
    return 0.5 * max_delta(stack, abs(c_top - c_bottom))


@dataclass(frozen=True)
class BackgroundProfile:
    """Background concentration and its derivatives sampled on the z-grid.

    ``d2phi_b`` holds the second derivative averaged over each node's control
    volume; that is the form the transport source uses.
    """

    delta: float
    c_top: float
    c_bottom: float
    depth: float
    z: np.ndarray
    phi_b: np.ndarray
    dphi_b: np.ndarray
    d2phi_b: np.ndarray

    @property
    def c_delta(self) -> float:
        return abs(self.c_top - self.c_bottom)

    @property
    def c_mid(self) -> float:
        return 0.5 * (self.c_top + self.c_bottom)

    def evaluate(self, z) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Exact ``(phi_b, phi_b', phi_b'')`` at arbitrary heights."""
        return _ramp(np.asarray(z, dtype=float), self.depth, self.delta, self.c_top, self.c_bottom)


def _ramp(z, depth, delta, c_top, c_bottom):
    # Each strip: quadratic up to its midpoint, mirrored quadratic after it, so
    # phi_b' is a triangle of height c_delta/delta and |phi_b''| = 2 c_delta/delta^2.
    c_mid = 0.5 * (c_top + c_bottom)
    phi = np.full_like(z, c_mid)
    d1 = np.zeros_like(z)
    d2 = np.zeros_like(z)
    half = 0.5 * delta

    def strip(s, lo_val, hi_val, mask):
        m = 2.0 * (hi_val - lo_val) / delta  # peak slope
        s = s[mask]
        first = s <= half
        out_phi = np.where(first, lo_val + m * s**2 / delta, hi_val - m * (delta - s) ** 2 / delta)
        out_d1 = np.where(first, 2.0 * m * s / delta, 2.0 * m * (delta - s) / delta)
        out_d2 = np.where(first, 2.0 * m / delta, -2.0 * m / delta)
        phi[mask], d1[mask], d2[mask] = out_phi, out_d1, out_d2

    top = z >= -delta
    strip(z + delta, c_mid, c_top, top)
    bottom = z <= -depth + delta
    strip(z + depth, c_bottom, c_mid, bottom)
    return phi, d1, d2


def build_background_profile(
    stack: LayerStack,
    c_top: float,
    c_bottom: float,
    delta: Optional[float],
    z_grid,
) -> BackgroundProfile:
    """Sample the C^1 piecewise-quadratic background profile on ``z_grid``.

    ``delta=None`` selects half of :func:`max_delta`.
    """
    c_delta = abs(c_top - c_bottom)
    dmax = max_delta(stack, c_delta)
    if delta is None:
        delta = 0.5 * dmax
    delta = float(delta)
    if not delta > 0:
        raise ConfigurationError("delta must be positive")
    if delta > dmax * (1 + 1e-12):
        raise ConfigurationError(f"delta={delta} exceeds the admissible maximum {dmax}")
    thick = stack.thicknesses
    if delta > 0.5 * min(thick[0], thick[-1]) * (1 + 1e-12):
        raise ConfigurationError(
            "transition strips must stay within half of the outermost layers "
            f"(delta={delta}, outer thicknesses {thick[0]}, {thick[-1]})"
        )
    z = np.asarray(z_grid, dtype=float)
    if z[0] > -stack.depth + 1e-12 or z[-1] < -1e-12:
        raise ConfigurationError("z_grid must cover [-H, 0]")

    phi, d1, _ = _ramp(z, stack.depth, delta, c_top, c_bottom)
    # control-volume average of phi_b'': exact difference of phi_b' over each volume
    zf = 0.5 * (z[1:] + z[:-1])
    zlo = np.concatenate([[z[0]], zf])
    zhi = np.concatenate([zf, [z[-1]]])
    _, d1_lo, _ = _ramp(zlo, stack.depth, delta, c_top, c_bottom)
    _, d1_hi, _ = _ramp(zhi, stack.depth, delta, c_top, c_bottom)
    d2 = (d1_hi - d1_lo) / (zhi - zlo)
    for arr in (phi, d1, d2):
        arr.setflags(write=False)
    return BackgroundProfile(delta, float(c_top), float(c_bottom), stack.depth, z, phi, d1, d2)
