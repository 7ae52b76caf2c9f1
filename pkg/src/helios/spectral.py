"""Radial eigenbasis, weighted inner product, projections and synthesis.

The radial diffusion operator on a ball of radius R0 with a Dirichlet wall
and boundedness at the origin has eigenvalues lam_n = (n pi / R0)^2 and
eigenfunctions

    w_n(r) = (sqrt(2) n pi / sqrt(R0^3)) * sinc(n pi r / R0),   n = 1, 2, ...

with sinc(x) = sin(x)/x, which form an orthonormal system in the weighted
space L^2([0, R0]; r^2).  Modes are indexed from n = 1; the formula is
undefined at n = 0.

All radial integrals use composite Simpson on the uniform grid, so the
number of intervals N must be even.  Mode n oscillates on the scale R0/n,
and Simpson on N points degrades once n approaches N; callers should keep
the truncation level below about N/3.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, DomainError

__all__ = [
    "RadialGrid",
    "eigenvalue",
    "eigenfunction",
    "mode_matrix",
    "project",
    "synthesize",
    "synthesize_squared",
    "weighted_l2_norm",
]

# Below this |x| the sinc is evaluated by its Taylor polynomial; keeps the
# removable singularity smooth for quadrature.
_SINC_SWITCH = 1e-8

_PRODUCT_SYMMETRY_TOL = 1e-8


@dataclass(frozen=True)
class RadialGrid:
    """Uniform grid r_i = i * (R0 / N), i = 0..N.  N must be >= 2."""

    R0: float
    points: int

    def __post_init__(self):
        if self.R0 <= 0:
            raise DomainError(f"R0 must be positive, got {self.R0}")
        if self.points < 2:
            raise DomainError(f"need at least 2 intervals, got {self.points}")

    @property
    def h(self) -> float:
        return self.R0 / self.points

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.R0, self.points + 1)


def eigenvalue(n: int, R0: float) -> float:
    """lam_n = (n pi / R0)^2, strictly increasing in n."""
    if n < 1:
        raise DomainError(f"mode index must be >= 1, got {n}")
    if R0 <= 0:
        raise DomainError(f"R0 must be positive, got {R0}")
    return (n * np.pi / R0) ** 2


def _sinc(x: np.ndarray) -> np.ndarray:
    # sin(x)/x with a 4th-order Taylor branch at the origin
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < _SINC_SWITCH
    safe = np.where(small, 1.0, x)
    out = np.where(small, 1.0 - x**2 / 6.0 + x**4 / 120.0, np.sin(safe) / safe)
    return out


def eigenfunction(n: int, R0: float, r):
    """w_n(r) on [0, R0]; accepts a scalar or an array of radii."""
    if n < 1:
        raise DomainError(f"mode index must be >= 1, got {n}")
    r = np.asarray(r, dtype=float)
    if np.any(r < 0) or np.any(r > R0 * (1 + 1e-12)):
        raise DomainError(f"radius outside [0, {R0}]")
    x = n * np.pi * r / R0
    out = (np.sqrt(2.0) * n * np.pi / np.sqrt(R0**3)) * _sinc(x)
    return float(out) if out.ndim == 0 else out


def mode_matrix(grid: RadialGrid, n_modes: int) -> np.ndarray:
    """Rows w_1..w_{n_modes} sampled on the grid; shape (n_modes, N+1)."""
    return np.vstack([eigenfunction(n, grid.R0, grid.nodes) for n in range(1, n_modes + 1)])


def simpson_weights(grid: RadialGrid) -> np.ndarray:
    """Composite Simpson weights on the grid nodes; requires even N."""
    if grid.points % 2 != 0:
        raise ConfigError(f"composite Simpson needs an even interval count, got N={grid.points}")
    w = np.ones(grid.points + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * (grid.h / 3.0)


def projection_weights(grid: RadialGrid, n_modes: int) -> np.ndarray:
    """Matrix P with (P @ values)_n = Simpson[r^2 values w_n]; shape (n_modes, N+1)."""
    w = simpson_weights(grid) * grid.nodes**2
    return mode_matrix(grid, n_modes) * w[None, :]


def project(values, grid: RadialGrid, n_modes: int) -> np.ndarray:
    """Modal coefficients c_n = int_0^R0 r^2 f(r) w_n(r) dr, n = 1..n_modes.

    ``values`` may carry leading batch axes; the node axis is the last one
    and becomes the mode axis of the result.
    """
    values = np.asarray(values, dtype=float)
    if values.shape[-1] != grid.points + 1:
        raise DataError(
            f"values have {values.shape[-1]} nodes, grid has {grid.points + 1}"
        )
    return values @ projection_weights(grid, n_modes).T


def synthesize(coeffs, grid: RadialGrid) -> np.ndarray:
    """Pointwise series sum_n c_n w_n(r_i) over the supplied modes."""
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.size == 0:
        return np.zeros(grid.points + 1)
    return mode_matrix(grid, coeffs.size).T @ coeffs


def synthesize_squared(products, grid: RadialGrid) -> np.ndarray:
    """Double series sum_{m,n} p_mn w_m(r_i) w_n(r_i) on the grid.

    ``products`` is either the matrix p_mn = g_m g_n (must be symmetric to
    1e-8 relative) or a coefficient vector g_n, in which case the rank-1
    products g_m g_n are formed, making the result (sum_n g_n w_n)^2.
    """
    products = np.asarray(products, dtype=float)
    if products.ndim == 1:
        products = np.outer(products, products)
    elif products.ndim == 2:
        if products.shape[0] != products.shape[1]:
            raise DataError(f"products matrix must be square, got {products.shape}")
        scale = max(float(np.max(np.abs(products))), 1.0)
        if float(np.max(np.abs(products - products.T))) > _PRODUCT_SYMMETRY_TOL * scale:
            raise DataError("products matrix asymmetric beyond 1e-8 tolerance")
    else:
        raise DataError(f"products must be a vector or matrix, got ndim={products.ndim}")
    modes = mode_matrix(grid, products.shape[0])
    return np.einsum("mi,ni,mn->i", modes, modes, products)


def weighted_l2_norm(values, grid: RadialGrid) -> float:
    """Simpson approximation of (int_0^R0 r^2 |f|^2 dr)^{1/2}."""
    values = np.asarray(values, dtype=float)
    w = simpson_weights(grid) * grid.nodes**2
    sq = float(w @ values**2)
    return np.sqrt(max(sq, 0.0))
