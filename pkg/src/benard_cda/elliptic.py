"""Direct solvers for the pressure Poisson and implicit-diffusion problems.

Both problems are periodic in x, so a real FFT along x decouples them into
one tridiagonal system in y per Fourier mode. The per-mode systems are
stacked into a single block-diagonal tridiagonal matrix, factorised once
with LAPACK ``?gttrf`` and reused for every solve on the same grid.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.fft import irfft, rfft
from scipy.linalg.lapack import dgttrf, dgttrs

from .errors import CompatibilityError, ConfigurationError
from .grid import GridSpec

COMPATIBILITY_TOL = 1e-8


def x_symbol(grid: GridSpec) -> np.ndarray:
    """Eigenvalues of minus the periodic second difference in x, per rfft mode."""
    k = np.arange(grid.nx // 2 + 1)
    return (2.0 / grid.dx**2) * (1.0 - np.cos(2.0 * np.pi * k / grid.nx))


class _ModeSolver:
    """Factorised block-tridiagonal system ``A_k q_k = f_k`` for all x-modes."""

    def __init__(self, diag, lower, upper):
        # diag: (nmodes, n); lower/upper: (nmodes, n-1)
        nmodes, n = diag.shape
        self.n = n
        self.nmodes = nmodes
        pad = np.zeros((nmodes, 1))
        dl = np.hstack([lower, pad]).ravel()[:-1]
        du = np.hstack([upper, pad]).ravel()[:-1]
        dl, d, du, du2, ipiv, info = dgttrf(dl, diag.ravel(), du)
        if info != 0:
            raise np.linalg.LinAlgError(f"tridiagonal factorisation failed (info={info})")
        self._lu = (dl, d, du, du2, ipiv)

    def solve(self, rhs_hat: np.ndarray) -> np.ndarray:
        """Solve for complex mode coefficients ``rhs_hat`` of shape (n, nmodes)."""
        flat = rhs_hat.T.ravel()
        b = np.empty((flat.size, 2), order="F")
        b[:, 0] = flat.real
        b[:, 1] = flat.imag
        x, info = dgttrs(*self._lu, b)
        if info != 0:
            raise np.linalg.LinAlgError(f"tridiagonal solve failed (info={info})")
        out = (x[:, 0] + 1j * x[:, 1]).reshape(self.nmodes, self.n)
        return out.T


@lru_cache(maxsize=64)
def _poisson_solver(grid: GridSpec) -> _ModeSolver:
    lam = x_symbol(grid)
    n = grid.ny
    idy2 = 1.0 / grid.dy**2
    diag = np.empty((lam.size, n))
    diag[:] = -lam[:, None] - 2.0 * idy2
    diag[:, 0] += idy2
    diag[:, -1] += idy2
    off = np.full((lam.size, n - 1), idy2)
    upper = off.copy()
    # the k = 0 block is singular; pin its first unknown to zero
    diag[0, 0] = 1.0
    upper[0, 0] = 0.0
    return _ModeSolver(diag, off, upper)


@lru_cache(maxsize=64)
def _helmholtz_solver(grid: GridSpec, gamma: float, kind: str) -> _ModeSolver:
    lam = x_symbol(grid)
    idy2 = 1.0 / grid.dy**2
    n = grid.ny - 1 if kind == "v" else grid.ny
    diag = np.empty((lam.size, n))
    diag[:] = 1.0 + gamma * (lam[:, None] + 2.0 * idy2)
    if kind != "v":
        # reflection ghosts (value -interior) at both walls
        diag[:, 0] += gamma * idy2
        diag[:, -1] += gamma * idy2
    off = np.full((lam.size, n - 1), -gamma * idy2)
    return _ModeSolver(diag, off, off)


def solve_pressure_poisson(rhs: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Solve ``div(grad p) = rhs`` with zero-flux walls; returns zero-mean ``p``.

    ``rhs`` is a cell-centred ``(ny, nx)`` array. Its mean must vanish to
    within ``1e-8 * max|rhs|``; the residual mean is removed before solving.
    """
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape != grid.interior_shape("p"):
        raise ConfigurationError(f"rhs has shape {rhs.shape}, expected {grid.interior_shape('p')}")
    scale = float(np.abs(rhs).max()) if rhs.size else 0.0
    mean = float(rhs.mean())
    if abs(mean) > COMPATIBILITY_TOL * scale:
        raise CompatibilityError(mean, scale)
    if scale == 0.0:
        return np.zeros_like(rhs)
    f = rfft(rhs - mean, axis=1)
    f[0, 0] = 0.0
    q = _poisson_solver(grid).solve(f)
    p = irfft(q, n=grid.nx, axis=1)
    return p - p.mean()


def solve_helmholtz(rhs: np.ndarray, gamma: float, field_kind: str, grid: GridSpec) -> np.ndarray:
    """Solve ``(I - gamma * lap) q = rhs`` with the native BCs of ``field_kind``.

    ``rhs`` has the interior layout of the field: ``(ny, nx)`` for ``u`` and
    ``theta``, ``(ny + 1, nx)`` for ``v`` (whose wall rows are returned as 0).
    """
    if gamma < 0:
        raise ConfigurationError(f"implicit coefficient must be >= 0, got {gamma}")
    if field_kind not in ("u", "v", "theta"):
        raise ConfigurationError(f"no Helmholtz problem for field kind {field_kind!r}")
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape != grid.interior_shape(field_kind):
        raise ConfigurationError(
            f"rhs has shape {rhs.shape}, expected {grid.interior_shape(field_kind)}"
        )
    if field_kind == "v":
        out = np.zeros_like(rhs)
        inner = rhs[1:-1]
    else:
        out = None
        inner = rhs
    if gamma == 0.0:
        sol = inner.copy()
    else:
        q = _helmholtz_solver(grid, float(gamma), field_kind).solve(rfft(inner, axis=1))
        sol = irfft(q, n=grid.nx, axis=1)
    if out is None:
        return sol
    out[1:-1] = sol
    return out
