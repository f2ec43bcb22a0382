"""Shared fixtures and grids for the verification suite."""

from __future__ import annotations

import numpy as np
import pytest

#: Standard time grid used by the scalar inequality sweeps.
T_GRID = (0.0, 0.25, 1.0, 4.0, 25.0, 100.0, 1.0e4)


@pytest.fixture(scope="session")
def t_grid() -> tuple[float, ...]:
    return T_GRID


@pytest.fixture(scope="session")
def rng() -> np.random.Generator:
    return np.random.default_rng(20260815)
