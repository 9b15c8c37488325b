"""Run configuration: an INI file with one section per module."""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence, Union

from .domain import BackgroundProfile, LayerStack, build_background_profile, build_layer_stack
from .fields import Grid, make_grid
from .transport import SimConfig


@dataclass
class RunConfig:
    period: float = 2 * math.pi
    depth: float = 4.0
    interfaces: tuple = (-3.0, -1.0)
    permeabilities: tuple = (1.0, 0.1, 1.0)
    diffusivities: tuple = (1.0, 1.0, 1.0)
    degenerate_layer: Optional[int] = 1
    epsilon: float = 0.1
    c_top: float = -1.0
    c_bottom: float = 1.0
    delta: Optional[float] = None
    nx: int = 32
    nz_per_layer: Union[int, tuple] = (128, 256, 128)
    sim: SimConfig = field(default_factory=SimConfig)
    m4_constant: float = 16.0
    tol_scale: float = 10.0
    directory: str = "run"
    plots: bool = False
    workers: int = 1

    def stack(self, epsilon: Optional[float] = None) -> LayerStack:
        eps = self.epsilon if epsilon is None else epsilon
        if self.degenerate_layer is None:
            eps = None
        return build_layer_stack(self.period, self.depth, self.interfaces, self.permeabilities,
                                 self.diffusivities, self.degenerate_layer, eps)

    def grid(self, stack: Optional[LayerStack] = None) -> Grid:
        return make_grid(stack or self.stack(), self.nx, self.nz_per_layer)

    def profile(self, stack: LayerStack, grid: Grid) -> BackgroundProfile:
        # delta is fixed by the eps-independent data so every epsilon shares one profile
        return build_background_profile(stack, self.c_top, self.c_bottom, self.delta, grid.z)

    def build(self, epsilon: Optional[float] = None):
        """``(stack, grid, profile)`` for the configured or the given epsilon."""
        stack = self.stack(epsilon)
        grid = self.grid(stack)
        return stack, grid, self.profile(stack, grid)

    def refined(self, factor: int = 2) -> "RunConfig":
        """Same run with ``h`` and ``dt`` divided by ``factor``."""
        nz = self.nz_per_layer
        nz = nz * factor if isinstance(nz, int) else tuple(n * factor for n in nz)
        sim = replace(self.sim, dt=self.sim.dt / factor, output_every=self.sim.output_every * factor)
        return replace(self, nx=self.nx * factor, nz_per_layer=nz, sim=sim)

    def coarsened(self, factor: int = 2) -> "RunConfig":
        nz = self.nz_per_layer
        nz = nz // factor if isinstance(nz, int) else tuple(n // factor for n in nz)
        every = max(self.sim.output_every // factor, 1)
        sim = replace(self.sim, dt=self.sim.dt * factor, output_every=every)
        return replace(self, nx=max(self.nx // factor, 4), nz_per_layer=nz, sim=sim)


def _number(text: str) -> float:
    """Float with optional ``pi`` factor, e.g. ``2*pi`` or ``pi``."""
    t = text.strip().replace(" ", "")
    if "pi" in t:
        head = t.replace("*pi", "").replace("pi", "")
        return (float(head) if head else 1.0) * math.pi
    return float(t)


def _list(text: str) -> tuple:
    text = text.strip()
    if not text:
        return ()
    return tuple(_number(v) for v in text.split(","))


def load_config(path: Union[str, Path, None] = None) -> RunConfig:
    """Read an INI file; missing keys keep their defaults."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.read_string(default_text())
    if path is not None:
        with open(path) as fh:
            cp.read_file(fh)
    d, g, t, e, o = (cp[s] for s in ("domain", "grid", "transport", "estimates", "output"))
    degenerate = d.get("degenerate_layer", "").strip()
    delta = d.get("delta", "").strip()
    nz = _list(g["nz_per_layer"])
    sim = SimConfig(
        dt=_number(t["dt"]), t_end=_number(t["t_end"]), cfl=_number(t["cfl"]),
        initial=t["initial"].strip(), amplitude=_number(t["amplitude"]),
        mode_x=t.getint("mode_x"), mode_z=t.getint("mode_z"), seed=t.getint("seed"),
        initial_path=t.get("initial_path", None) or None, output_every=t.getint("output_every"),
        checkpoint_every=t.getint("checkpoint_every"), checkpoint_dir=t.get("checkpoint_dir", None) or None,
        advection=t.getboolean("advection"), single_threaded=t.getboolean("single_threaded"),
    )
    return RunConfig(
        period=_number(d["period"]), depth=_number(d["depth"]), interfaces=_list(d["interfaces"]),
        permeabilities=_list(d["permeabilities"]), diffusivities=_list(d["diffusivities"]),
        degenerate_layer=int(degenerate) if degenerate else None,
        epsilon=_number(d["epsilon"]), c_top=_number(d["c_top"]), c_bottom=_number(d["c_bottom"]),
        delta=_number(delta) if delta else None,
        nx=g.getint("nx"), nz_per_layer=int(nz[0]) if len(nz) == 1 else tuple(int(n) for n in nz),
        sim=sim, m4_constant=_number(e["m4_constant"]), tol_scale=_number(e["tol_scale"]),
        directory=o["directory"].strip(), plots=o.getboolean("plots"), workers=o.getint("workers"),
    )


def default_text() -> str:
    return resources.files("darcylayers").joinpath("data/default.ini").read_text()


def default_config() -> RunConfig:
    return load_config(None)
