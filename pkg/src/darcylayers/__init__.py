"""Darcy-Boussinesq convection in layered porous media with a vanishing-permeability layer."""
from .domain import (
    BackgroundProfile,
    ConfigurationError,
    LayerStack,
    build_background_profile,
    build_layer_stack,
    default_delta,
    max_delta,
)
from .fields import Grid, ModeCoefficients, ScalarField, from_modes, make_grid, split_zero_mode, to_modes
from .pressure import PressureSolve, PressureSolver, solve_degenerate, solve_mode, solve_pressure, solve_regular, velocity

__version__ = "0.1.0"
