"""Transform-based operators on the periodic unit torus T = [-1/2, 1/2).

Fields are plain float64 arrays sampled at the uniform points
x_j = -1/2 + j/n of a :class:`Grid`. Spectral coefficients follow the
e^{2 pi i k x} convention on the unit-length torus, so the derivative
multiplier is 2*pi*i*k and the fractional Laplacian multiplier is
(2*pi*|k|)^alpha. All operators are pure functions of their inputs and
are safe to call concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Relative tolerance on the mean of an antiderivative argument. A larger
# residual signals a broken zero-mean invariant upstream.
MEAN_TOL = 1e-10


class InvalidFieldError(ValueError):
    """Field contains NaN or infinite samples."""


class GridMismatchError(ValueError):
    """Operands sampled on different grids."""


class MeanViolationError(ValueError):
    """Antiderivative of a field whose mean is not (numerically) zero."""


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid with n points on the unit torus.

    Parameters
    ----------
    n : int
        Number of points; must be even and at least 8 so the 2/3
        dealiasing cutoff is well defined. Powers of two give the
        fastest transforms but are not required.
    """

    n: int

    def __post_init__(self) -> None:
        if self.n < 8:
            raise ValueError(f"grid size must be >= 8, got {self.n}")
        if self.n % 2 != 0:
            raise ValueError(f"grid size must be even, got {self.n}")
        object.__setattr__(self, "dx", 1.0 / self.n)
        object.__setattr__(self, "x", -0.5 + np.arange(self.n) / self.n)
        # rfft layout: integer modes k = 0 .. n/2
        k = np.arange(self.n // 2 + 1)
        object.__setattr__(self, "modes", k)
        object.__setattr__(self, "two_pi_k", 2.0 * np.pi * k)
        object.__setattr__(self, "dealias_keep", k <= self.n // 3)


def _check(f: np.ndarray, grid: Grid) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape != (grid.n,):
        raise GridMismatchError(f"expected shape ({grid.n},), got {f.shape}")
    if not np.all(np.isfinite(f)):
        raise InvalidFieldError("field contains non-finite samples")
    return f


def _origin_phase(grid: Grid) -> np.ndarray:
    # samples start at x_0 = -1/2, so rfft output is (-1)^k times the
    # true coefficient of e^{2 pi i k x}
    return np.where(grid.modes % 2 == 0, 1.0, -1.0)


def to_spectrum(f: np.ndarray, grid: Grid) -> np.ndarray:
    """Coefficients c_k of e^{2 pi i k x}, k = 0..n/2 (rfft layout).

    Real fields have Hermitian-symmetric full spectra, so the
    non-negative half determines the field.
    """
    return _origin_phase(grid) * np.fft.rfft(_check(f, grid)) / grid.n


def from_spectrum(c: np.ndarray, grid: Grid) -> np.ndarray:
    """Inverse of :func:`to_spectrum`; round trip is exact to ~1e-16."""
    c = np.asarray(c)
    if c.shape != (grid.n // 2 + 1,):
        raise GridMismatchError(f"expected {grid.n // 2 + 1} coefficients, got {c.shape}")
    return np.fft.irfft(_origin_phase(grid) * c * grid.n, n=grid.n)


def mean(f: np.ndarray) -> float:
    """Torus integral of f (domain has unit length)."""
    return float(np.mean(f))


def l2_norm(f: np.ndarray) -> float:
    """L2 norm on the unit torus, computed in physical space."""
    return float(np.sqrt(np.mean(np.square(f))))


def spectrum_l2(c: np.ndarray) -> float:
    """L2 norm from rfft-layout coefficients (Parseval)."""
    c = np.asarray(c)
    s = np.abs(c[0]) ** 2 + 2.0 * np.sum(np.abs(c[1:-1]) ** 2) + np.abs(c[-1]) ** 2
    return float(np.sqrt(s))


def derivative(f: np.ndarray, grid: Grid) -> np.ndarray:
    """Spectral d/dx. The asymmetric Nyquist mode is zeroed."""
    fh = np.fft.rfft(_check(f, grid))
    fh *= 1j * grid.two_pi_k
    fh[-1] = 0.0
    return np.fft.irfft(fh, n=grid.n)


def second_derivative(f: np.ndarray, grid: Grid) -> np.ndarray:
    """Spectral d^2/dx^2 (even multiplier, Nyquist kept)."""
    fh = np.fft.rfft(_check(f, grid))
    fh *= -np.square(grid.two_pi_k)
    return np.fft.irfft(fh, n=grid.n)


def antiderivative(f: np.ndarray, grid: Grid) -> np.ndarray:
    """Zero-mean primitive of a (numerically) zero-mean field.

    Raises
    ------
    MeanViolationError
        If |mean(f)| exceeds MEAN_TOL * max(1, max|f|); the caller's
        zero-mean invariant is broken and integrating would silently
        produce a non-periodic primitive.
    """
    f = _check(f, grid)
    m = np.mean(f)
    if abs(m) > MEAN_TOL * max(1.0, float(np.max(np.abs(f)))):
        raise MeanViolationError(f"antiderivative of field with mean {m:.3e}")
    fh = np.fft.rfft(f)
    fh[0] = 0.0
    fh[1:] /= 1j * grid.two_pi_k[1:]
    fh[-1] = 0.0
    return np.fft.irfft(fh, n=grid.n)


def fractional_laplacian(f: np.ndarray, alpha: float, grid: Grid) -> np.ndarray:
    """Fractional Laplacian (-d^2/dx^2)^{alpha/2}.

    Acts as the multiplier (2*pi*|k|)^alpha; the k = 0 mode maps to 0,
    so the output has zero mean for any input.
    """
    if not 0.0 < alpha <= 2.0:
        raise ValueError(f"alpha must be in (0, 2], got {alpha}")
    fh = np.fft.rfft(_check(f, grid))
    fh[0] = 0.0
    fh[1:] *= grid.two_pi_k[1:] ** alpha
    return np.fft.irfft(fh, n=grid.n)


def fractional_laplacian_antiderivative(f: np.ndarray, alpha: float, grid: Grid) -> np.ndarray:
    """Fractional Laplacian of the primitive of the zero-mean part of f.

    Multiplier (2*pi*|k|)^alpha / (2*pi*i*k) for k != 0; the k = 0 mode
    of the output is 0, so any constant component of f is discarded.
    """
    if not 0.0 < alpha <= 2.0:
        raise ValueError(f"alpha must be in (0, 2], got {alpha}")
    fh = np.fft.rfft(_check(f, grid))
    fh[0] = 0.0
    fh[1:] *= grid.two_pi_k[1:] ** alpha / (1j * grid.two_pi_k[1:])
    fh[-1] = 0.0
    return np.fft.irfft(fh, n=grid.n)


def convolve(f: np.ndarray, g: np.ndarray, grid: Grid) -> np.ndarray:
    """Periodic convolution (f*g)(x) = int_T f(y) g(x-y) dy.

    Computed as a spectral product; exact for band-limited inputs.
    """
    fh = np.fft.rfft(_check(f, grid))
    gh = np.fft.rfft(_check(g, grid))
    return np.fft.irfft(_origin_phase(grid) * fh * gh / grid.n, n=grid.n)


def dealias(f: np.ndarray, grid: Grid) -> np.ndarray:
    """Zero all modes with |k| > n/3 (2/3 rule for quadratic products)."""
    fh = np.fft.rfft(_check(f, grid))
    fh[~grid.dealias_keep] = 0.0
    return np.fft.irfft(fh, n=grid.n)


def midpoint_offsets(refinement: int) -> np.ndarray:
    """Half-cell-offset midpoint quadrature nodes y_q on the torus.

    y_q = -1/2 + (q + 1/2)/R for q = 0..R-1. The set is symmetric under
    y -> -y and never contains 0, which is what makes it suitable for
    principal-value quadrature of even singular kernels.
    """
    r = int(refinement)
    return -0.5 + (np.arange(r) + 0.5) / r


def resample_midpoints(f: np.ndarray, grid: Grid, refinement: int) -> np.ndarray:
    """Trigonometric interpolation of f onto the midpoint-offset grid.

    Returns f evaluated at z_p = -1/2 + (p + 1/2)/R, p = 0..R-1, where R
    must be a multiple of the grid size. The original Nyquist mode is
    dropped (it has no well-defined interpolant).
    """
    f = _check(f, grid)
    r = int(refinement)
    if r % grid.n != 0:
        raise ValueError(f"refinement {r} must be a multiple of the grid size {grid.n}")
    c = np.fft.rfft(f) / grid.n
    c[-1] = 0.0
    k = np.arange(grid.n // 2 + 1)
    # half-cell phase: sample positions sit 1/(2R) past each refined node
    c = c * np.exp(1j * np.pi * k / r)
    padded = np.zeros(r // 2 + 1, dtype=complex)
    padded[: grid.n // 2 + 1] = c
    return np.fft.irfft(padded * r, n=r)


def circular_correlate(weights: np.ndarray, values: np.ndarray) -> np.ndarray:
    """c[p] = sum_q weights[q] * values[(p+q) mod R], via FFT.

    Evaluates the same finite sums as the direct loop, just in
    O(R log R) instead of O(R^2).
    """
    w = np.asarray(weights, dtype=float)
    v = np.asarray(values, dtype=float)
    if w.shape != v.shape:
        raise ValueError("weights and values must have equal length")
    return np.fft.irfft(np.conj(np.fft.rfft(w)) * np.fft.rfft(v), n=v.size)
