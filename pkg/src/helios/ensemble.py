"""Monte-Carlo statistics of the final-time field over driving-path ensembles.

``run_ensemble`` draws P fractional-Brownian paths, pushes each through a
forward solver, optionally pollutes the final-time fields with multiplicative
uniform noise, projects onto the radial eigenbasis and returns the sample
mean and unbiased covariance of the modal data u_n(T).  These statistics
are the raw material of the source reconstruction.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import fbm, forward, spectral
from .errors import DomainError, HeliosError
from .fbm import TimeGrid
from .forward import DiffusionProblem
from .spectral import RadialGrid

__all__ = ["NoiseSpec", "EnsembleStats", "run_ensemble", "add_noise", "stability_ratio"]


@dataclass(frozen=True)
class NoiseSpec:
    """Relative measurement-noise level and the seed of its draws."""

    epsilon: float
    seed: int = 0

    def __post_init__(self):
        if not np.isfinite(self.epsilon) or self.epsilon < 0:
            raise DomainError(f"epsilon must be finite and >= 0, got {self.epsilon}")


@dataclass(frozen=True)
class EnsembleStats:
    """Sample mean and unbiased covariance of u_n(T) over the paths."""

    mean: np.ndarray
    cov: np.ndarray = field(repr=False)
    path_count: int
    seed: int


def add_noise(values, rgrid: RadialGrid, spec: NoiseSpec):
    """Perturb final-time data as u (1 + eps xi), xi iid uniform on (-1, 1).

    ``values`` is one field (N+1,) or a batch (P, N+1); the draw is seeded
    by ``spec.seed`` so the same spec reproduces the same perturbation.
    Returns (perturbed, delta) with delta the weighted-L2 size of the
    perturbation (per row for a batch).
    """
    values = np.asarray(values, dtype=float)
    if spec.epsilon == 0.0:
        delta = 0.0 if values.ndim == 1 else np.zeros(values.shape[0])
        return values.copy(), delta
    rng = np.random.default_rng(spec.seed)
    xi = rng.uniform(-1.0, 1.0, size=values.shape)
    perturbed = values * (1.0 + spec.epsilon * xi)
    diff = perturbed - values
    if values.ndim == 1:
        delta = spectral.weighted_l2_norm(diff, rgrid)
    else:
        delta = np.array([spectral.weighted_l2_norm(row, rgrid) for row in diff])
    return perturbed, delta


def _final_fields(problem: DiffusionProblem, rgrid: RadialGrid, tgrid: TimeGrid,
                  paths: np.ndarray, solver: str, n_modes: int,
                  threads: int) -> np.ndarray:
    """Final-time fields for every path, in path order; shape (P, N+1)."""

    def chunk_fields(block: np.ndarray, lo: int) -> np.ndarray:
        try:
            if solver == "fd":
                return forward.fd_final_fields(problem, rgrid, tgrid, block)
            modal = forward.mild_final_modes(problem, rgrid, tgrid, block, n_modes)
            return (spectral.mode_matrix(rgrid, n_modes).T @ modal).T
        except HeliosError as exc:
            raise type(exc)(f"paths {lo}..{lo + block.shape[0] - 1}: {exc}") from exc

    if solver not in ("fd", "mild"):
        raise DomainError(f"solver must be 'fd' or 'mild', got {solver!r}")
    count = paths.shape[0]
    workers = max(1, int(threads))
    if workers == 1 or count < 2 * workers:
        return chunk_fields(paths, 0)
    bounds = np.linspace(0, count, workers + 1).astype(int)
    blocks = [(paths[lo:hi], lo) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(lambda args: chunk_fields(*args), blocks))
    return np.vstack(parts)


def run_ensemble(problem: DiffusionProblem, rgrid: RadialGrid, tgrid: TimeGrid,
                 path_count: int, n_modes: int, solver: str = "fd",
                 noise: Optional[NoiseSpec] = None, seed: int = 0,
                 threads: int = 1) -> EnsembleStats:
    """Sample statistics of the modal final-time data over ``path_count`` paths.

    Paths are drawn once with the given seed; forward solves may be chunked
    across ``threads`` workers, and the reduction to mean and covariance is
    performed in fixed path order, so the result does not depend on the
    worker count.  The covariance uses the unbiased 1/(P-1) normalization
    and is symmetrized before return.
    """
    if path_count < 2:
        raise DomainError(f"need at least 2 paths for sample statistics, got {path_count}")
    ens = fbm.sample_paths(tgrid, problem.hurst, path_count, seed)
    fields = _final_fields(problem, rgrid, tgrid, ens.paths, solver, n_modes, threads)
    if noise is not None and noise.epsilon > 0.0:
        fields, _ = add_noise(fields, rgrid, noise)
    coeffs = spectral.project(fields, rgrid, n_modes)  # (P, n_modes)
    mean = coeffs.mean(axis=0)
    cov = np.cov(coeffs, rowvar=False, ddof=1)
    cov = np.atleast_2d(cov)
    cov = 0.5 * (cov + cov.T)
    return EnsembleStats(mean=mean, cov=cov, path_count=path_count, seed=int(seed))


def stability_ratio(problem: DiffusionProblem, rgrid: RadialGrid, tgrid: TimeGrid,
                    path_count: int, seed: int = 0, n_modes: int = 30) -> float:
    """Monte-Carlo E||u||^2 over the space-time cylinder, divided by its bound.

    The bound is T^3 ||f||^2 ||h||_inf^2 + T^{2H+1}/(2H+1) ||g||^2 with
    weighted-L2 norms in space.  The expectation uses mild-solution modal
    trajectories (Parseval in the truncated basis) and the trapezoid rule
    in time.  Requires h > 0 on the grid; rejects f = g = 0.
    """
    nodes = tgrid.nodes
    hvals = np.broadcast_to(np.asarray(problem.h(nodes), dtype=float), nodes.shape)
    if np.any(hvals <= 0):
        raise DomainError("stability_ratio requires h(t) > 0 on the grid")
    f_norm = spectral.weighted_l2_norm(problem.f(rgrid.nodes), rgrid)
    g_norm = spectral.weighted_l2_norm(problem.g(rgrid.nodes), rgrid)
    T, H = problem.T, problem.hurst
    bound = T**3 * f_norm**2 * float(np.max(np.abs(hvals))) ** 2 \
        + T ** (2 * H + 1) / (2 * H + 1) * g_norm**2
    if bound == 0.0:
        raise DomainError("stability bound is zero: f and g both vanish")

    paths = fbm.sample_paths(tgrid, H, path_count, seed).paths
    decay, local, f_coeffs, g_coeffs = forward.mild_tables(problem, rgrid, tgrid, n_modes)
    incr = np.diff(paths, axis=1)
    det = np.zeros(n_modes)
    sto = np.zeros((n_modes, path_count))
    norm_sq = np.zeros(tgrid.steps + 1)  # mean over paths of sum_n u_n(t_k)^2
    for k in range(tgrid.steps):
        det = decay[k] * det + local[k]
        sto = decay[k][:, None] * (sto + incr[:, k][None, :])
        u = f_coeffs[:, None] * det[:, None] + g_coeffs[:, None] * sto
        norm_sq[k + 1] = float(np.mean(np.sum(u * u, axis=0)))
    expected = float(np.trapezoid(norm_sq, dx=tgrid.dt))
    return expected / bound
