"""Exact fractional Brownian motion synthesis on uniform time grids.

A path of fBm with Hurst index H in (0, 1) is a centered Gaussian process
B(t) with B(0) = 0 and covariance

    R(t, s) = 0.5 * (t^{2H} + s^{2H} - |t - s|^{2H}).

Paths are drawn by dense Cholesky factorization of the covariance matrix
over the interior nodes t_1..t_M (t_0 is pinned to zero), which is exact in
distribution for every H.  The O(M^3) factorization is paid once per
(grid, H) configuration and reused for all requested paths.

Randomness comes from ``numpy.random.Generator`` seeded with PCG64 and the
ziggurat standard-normal transform, both documented algorithms, so a given
(grid, H, count, seed) tuple reproduces the same ensemble bit for bit on a
fixed NumPy version.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, NumericError

__all__ = [
    "TimeGrid",
    "PathEnsemble",
    "covariance",
    "increment_covariance",
    "covariance_matrix",
    "cholesky_factor",
    "sample_paths",
    "increments",
]

# Jitter ladder for covariance matrices that are PD in exact arithmetic but
# lose definiteness to roundoff near the ends of the H range.
_JITTER_START = 1e-12
_JITTER_GROWTH = 10.0
_JITTER_TRIES = 3


def check_hurst(hurst: float) -> float:
    """Validate a Hurst index; the open interval (0, 1) only."""
    hurst = float(hurst)
    if not 0.0 < hurst < 1.0:
        raise DomainError(f"Hurst index must lie strictly in (0, 1), got {hurst}")
    return hurst


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid 0 = t_0 < t_1 < ... < t_M = t_final."""

    t_final: float
    steps: int

    def __post_init__(self):
        if self.t_final <= 0:
            raise DomainError(f"t_final must be positive, got {self.t_final}")
        if self.steps < 1:
            raise DomainError(f"steps must be >= 1, got {self.steps}")

    @property
    def dt(self) -> float:
        return self.t_final / self.steps

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.t_final, self.steps + 1)


@dataclass(frozen=True)
class PathEnsemble:
    """fBm sample paths on a grid; row p is path p at the grid nodes."""

    grid: TimeGrid
    hurst: float
    paths: np.ndarray = field(repr=False)
    seed: int

    @property
    def count(self) -> int:
        return self.paths.shape[0]


def covariance(t, s, hurst: float):
    """fBm covariance R(t, s) = 0.5 (t^{2H} + s^{2H} - |t-s|^{2H}).

    Accepts scalars or broadcastable arrays; times must be nonnegative.
    """
    hurst = check_hurst(hurst)
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    if np.any(t < 0) or np.any(s < 0):
        raise DomainError("covariance requires t >= 0 and s >= 0")
    h2 = 2.0 * hurst
    out = 0.5 * (t**h2 + s**h2 - np.abs(t - s) ** h2)
    return float(out) if out.ndim == 0 else out


def increment_covariance(t: float, s: float, r: float, hurst: float) -> float:
    """Covariance of the disjoint increments B(t)-B(s) and B(s)-B(r).

    Equals 0.5 [(t-r)^{2H} - (t-s)^{2H} - (s-r)^{2H}]; vanishes for H = 1/2,
    where increments over disjoint intervals are independent.
    """
    hurst = check_hurst(hurst)
    if not 0 <= r < s < t:
        raise DomainError(f"increment_covariance requires 0 <= r < s < t, got ({t}, {s}, {r})")
    h2 = 2.0 * hurst
    return 0.5 * ((t - r) ** h2 - (t - s) ** h2 - (s - r) ** h2)


def covariance_matrix(grid: TimeGrid, hurst: float) -> np.ndarray:
    """Gram matrix [R(t_i, t_j)] over the interior nodes t_1..t_M."""
    t = grid.nodes[1:]
    return covariance(t[:, None], t[None, :], hurst)


def cholesky_factor(grid: TimeGrid, hurst: float) -> np.ndarray:
    """Lower-triangular factor L with L L^T = [R(t_i, t_j)], i,j = 1..M.

    The Gram matrix is PD in exact arithmetic.  If roundoff spoils that,
    a diagonal jitter of 1e-12 * max(diag) is added and escalated tenfold,
    at most three times, before giving up.
    """
    gram = covariance_matrix(grid, hurst)
    jitter = _JITTER_START * float(np.max(np.diag(gram)))
    for attempt in range(_JITTER_TRIES + 1):
        try:
            return np.linalg.cholesky(gram)
        except np.linalg.LinAlgError:
            gram = gram + jitter * np.eye(gram.shape[0])
            jitter *= _JITTER_GROWTH
    smallest = float(np.min(np.linalg.eigvalsh(gram)))
    raise NumericError(
        f"covariance factorization failed after {_JITTER_TRIES} jitter retries "
        f"(H={hurst}, M={grid.steps}); smallest eigenvalue {smallest:.3e}"
    )


def sample_paths(grid: TimeGrid, hurst: float, count: int, seed: int) -> PathEnsemble:
    """Draw ``count`` fBm paths on ``grid``; column 0 (t = 0) is exactly zero.

    Paths are L @ Z with Z a (M, count) standard-normal block from
    ``default_rng(seed)``, so identical arguments give identical output.
    """
    hurst = check_hurst(hurst)
    if count < 1:
        raise DomainError(f"count must be >= 1, got {count}")
    factor = cholesky_factor(grid, hurst)
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((grid.steps, count))
    paths = np.zeros((count, grid.steps + 1))
    paths[:, 1:] = (factor @ z).T
    return PathEnsemble(grid=grid, hurst=hurst, paths=paths, seed=int(seed))


def increments(ensemble: PathEnsemble) -> np.ndarray:
    """Per-step increments B(t_k) - B(t_{k-1}); shape (count, M)."""
    return np.diff(ensemble.paths, axis=1)
