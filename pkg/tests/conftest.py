import numpy as np
import pytest

from epasim.spectral import Grid


def random_smooth_field(grid: Grid, rng: np.random.Generator, kmax: int = 8,
                        amp: float = 1.0, offset: float = 0.0) -> np.ndarray:
    """Band-limited random field with geometrically decaying mode amplitudes."""
    f = np.full(grid.n, offset)
    for k in range(1, kmax + 1):
        a, b = rng.normal(size=2) * amp * 0.5 ** k
        f += a * np.cos(2 * np.pi * k * grid.x) + b * np.sin(2 * np.pi * k * grid.x)
    return f


def random_positive_field(grid: Grid, rng: np.random.Generator, kmax: int = 8,
                          floor: float = 0.1) -> np.ndarray:
    """Random smooth field with min >= floor (rescaled if needed)."""
    f = random_smooth_field(grid, rng, kmax=kmax, amp=0.6, offset=1.0)
    lo = f.min()
    if lo < floor:
        f = floor + (f - lo) * (1.0 - floor) / (f.max() - lo + 1e-30)
    return f


@pytest.fixture
def grid64() -> Grid:
    return Grid(64)


@pytest.fixture
def grid128() -> Grid:
    return Grid(128)
