import math

import numpy as np
import pytest

from darcylayers import build_layer_stack, make_grid


@pytest.fixture
def single_layer():
    return build_layer_stack(2 * math.pi, 1.0, [], [1.0], [1.0])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_psi(grid, rng, n_modes=4):
    """Smooth random field vanishing at the top and bottom."""
    x = grid.x[:, None]
    s = (grid.z[None, :] + grid.depth) / grid.depth
    out = np.zeros(grid.shape)
    for m in range(n_modes):
        for n in range(1, n_modes + 1):
            a, b = rng.standard_normal(2)
            kx = 2 * np.pi * m * x / grid.period
            out += (a * np.cos(kx) + b * np.sin(kx)) * np.sin(np.pi * n * s) / (1 + m + n)
    return out
