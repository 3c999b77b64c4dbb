"""Shared fixtures: small grids keep the suite at desk scale."""

import math

import numpy as np
import pytest

from nslab.field import Grid, GridField
from nslab.initdata import InitialDataSpec, make_initial_data
from nslab.timegrid import TimeGrid


@pytest.fixture
def grid16() -> Grid:
    return Grid(n=16, L=2 * math.pi)


@pytest.fixture
def grid32() -> Grid:
    return Grid(n=32, L=2 * math.pi)


@pytest.fixture
def short_times() -> TimeGrid:
    return TimeGrid(kind="geometric", T=0.2, samples=8, ratio=0.7)


@pytest.fixture
def taylor_green16(grid16) -> GridField:
    return make_initial_data(InitialDataSpec(kind="taylor_green", amplitude=0.2), grid16)


@pytest.fixture
def random_field(grid16):
    """Unprojected smooth random field built from low modes."""

    def build(seed: int = 0) -> GridField:
        rng = np.random.default_rng(seed)
        X, Y, Z = grid16.mesh
        comps = []
        for _ in range(3):
            a, b, c = rng.normal(size=3)
            comps.append(a * np.sin(X + 2 * Y) + b * np.cos(Z - Y) + c * np.sin(3 * X) * np.cos(Z))
        return GridField.from_components(grid16, comps)

    return build
