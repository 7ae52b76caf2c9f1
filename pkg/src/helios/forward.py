"""Forward solvers for the randomly forced radial diffusion problem.

The field u(r, t) on 0 < r < R0, 0 < t < T satisfies

    u_t = a(t) [u_rr + (2/r) u_r] + f(r) h(t) + g(r) dB/dt,
    u(r, 0) = 0,   u(R0, t) = 0,   u bounded as r -> 0,

where B is fractional Brownian motion and a(t) stays within positive
bounds.  Two independent solvers are provided:

* ``solve_fd``: backward-difference time stepping with second-order central
  differences in space.  Each step solves a tridiagonal system whose
  diagonal is h^2/dt + 2 a(t_n) and whose off-diagonals are
  -a(t_n) (h/r_i +- 1); the noise enters through the per-step increment of
  the driving path.  The system is implicit and unconditionally stable.

* ``solve_mild``: the eigenfunction expansion, mode by mode,

      u_n(t) = f_n int_0^t h(tau) exp(-lam_n int_tau^t a) dtau
             + g_n int_0^t exp(-lam_n int_tau^t a) dB(tau),

  with per-step Simpson for the deterministic convolution and a
  left-endpoint sum on the path increments for the stochastic one.  Both
  are evaluated by stable one-step recurrences (every exponent is <= 0).

The FD scheme is the production path; the mild solver doubles as its
oracle for deterministic sources and is much faster per path.

Notes on the discretization near the ends of the grid: the interior node
next to the origin has r_1 = h, so the coefficient a(t_n)(h/r_1 - 1) that
would couple to u_0 vanishes identically; the reported value at r = 0 uses
the symmetry closure u_0 = u_1 (zero radial derivative of a spherically
symmetric field).  At the wall the closure coefficient multiplies the
boundary value, which is zero at every time level, so whether one reads it
at the current or initial step is immaterial.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.linalg import solve_banded

from . import spectral
from .errors import DataError, DomainError, NumericError
from .fbm import TimeGrid, check_hurst
from .spectral import RadialGrid

__all__ = [
    "DiffusionProblem",
    "CumulativeDiffusivity",
    "FieldHistory",
    "ModalTrajectory",
    "accumulate_a",
    "solve_fd",
    "solve_mild",
    "final_time_modes",
]


@dataclass(frozen=True)
class DiffusionProblem:
    """Problem data: coefficients, source profiles, domain and horizon.

    ``a_bounds = (a0, a1)`` declares the positive diffusivity envelope
    0 < a0 <= a(t) <= a1; when given it is enforced on the interior grid
    nodes t_1..t_M (the schemes never evaluate a at t_0, and natural
    choices such as a(t) = t^2 vanish there).  ``require_positive_h``
    asserts the lower bound h >= C(h) > 0 on all nodes, the condition
    under which the deterministic source is recoverable.
    """

    a: Callable[[np.ndarray], np.ndarray]
    f: Callable[[np.ndarray], np.ndarray]
    g: Callable[[np.ndarray], np.ndarray]
    h: Callable[[np.ndarray], np.ndarray]
    R0: float
    T: float
    hurst: float = 0.5
    a_bounds: Optional[Tuple[float, float]] = None
    require_positive_h: bool = False

    def __post_init__(self):
        if self.R0 <= 0 or self.T <= 0:
            raise DomainError("R0 and T must be positive")
        check_hurst(self.hurst)
        if self.a_bounds is not None:
            a0, a1 = self.a_bounds
            if not 0 < a0 <= a1:
                raise DomainError(f"need 0 < a0 <= a1, got {self.a_bounds}")

    def validate_on(self, tgrid: TimeGrid) -> None:
        nodes = tgrid.nodes
        vals = np.asarray(self.a(nodes), dtype=float)
        if not np.all(np.isfinite(vals)):
            raise NumericError("diffusivity a(t) is not finite on the grid")
        if self.a_bounds is not None:
            a0, a1 = self.a_bounds
            interior = vals[1:]
            if np.any(interior < a0 - 1e-12) or np.any(interior > a1 + 1e-12):
                raise DomainError(
                    f"a(t) leaves the declared bounds [{a0}, {a1}] on the grid"
                )
        if self.require_positive_h:
            hvals = np.asarray(self.h(nodes), dtype=float)
            if np.any(hvals <= 0):
                raise DomainError("h(t) must have a positive lower bound on the grid")


class CumulativeDiffusivity:
    """Table of A(t) = int_0^t a(s) ds on a half-step refinement of a grid.

    Each grid step is subdivided once, and the integral over every
    half-step is a Simpson evaluation with its own midpoint, so values at
    grid nodes and step midpoints are tabulated directly (exact for
    polynomial a up to cubics).  Off-node queries interpolate linearly
    between stored nodes.
    """

    def __init__(self, a: Callable, tgrid: TimeGrid):
        fine = np.linspace(0.0, tgrid.t_final, 4 * tgrid.steps + 1)
        vals = np.asarray(a(fine), dtype=float)
        if vals.shape != fine.shape:
            vals = np.broadcast_to(vals, fine.shape).astype(float)
        if not np.all(np.isfinite(vals)):
            raise NumericError("diffusivity a(t) is not finite on the quadrature grid")
        step = fine[1] - fine[0]
        # Simpson over consecutive half-steps [fine[2j], fine[2j+2]]
        pieces = (step / 3.0) * (vals[0:-1:2] + 4.0 * vals[1::2] + vals[2::2])
        table = np.concatenate(([0.0], np.cumsum(pieces)))
        self.nodes = fine[::2]
        self.values = table
        self.grid = tgrid

    def __call__(self, t):
        return np.interp(t, self.nodes, self.values)

    def between(self, tau, t):
        """int_tau^t a(s) ds = A(t) - A(tau)."""
        return self(t) - self(tau)

    @property
    def at_grid_nodes(self) -> np.ndarray:
        return self.values[::2]

    @property
    def at_midpoints(self) -> np.ndarray:
        return self.values[1::2]


def accumulate_a(a: Callable, tgrid: TimeGrid) -> CumulativeDiffusivity:
    """Build the cumulative integral table of the diffusivity."""
    return CumulativeDiffusivity(a, tgrid)


@dataclass(frozen=True)
class FieldHistory:
    """Field values u(r_i, t_n); shape (M+1, N+1), time along axis 0."""

    rgrid: RadialGrid
    tgrid: TimeGrid
    values: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class ModalTrajectory:
    """Modal coefficients u_n(t_k); shape (M+1, n_modes)."""

    tgrid: TimeGrid
    coeffs: np.ndarray = field(repr=False)


def _check_path(path, tgrid: TimeGrid) -> np.ndarray:
    path = np.asarray(path, dtype=float)
    if path.shape != (tgrid.steps + 1,):
        raise DataError(
            f"path has shape {path.shape}, expected ({tgrid.steps + 1},) on the time grid"
        )
    return path


def _fd_run(problem: DiffusionProblem, rgrid: RadialGrid, tgrid: TimeGrid,
            incr: np.ndarray, keep_history: bool):
    """Shared FD stepper; ``incr`` has shape (P, M) of path increments.

    Returns the full history (M+1, N+1) when keep_history (single path) or
    the final-time fields (P, N+1) otherwise.
    """
    problem.validate_on(tgrid)
    n_int = rgrid.points - 1
    h = rgrid.h
    dt = tgrid.dt
    r_int = rgrid.nodes[1:-1]
    f_vals = np.asarray(problem.f(r_int), dtype=float)
    g_vals = np.asarray(problem.g(r_int), dtype=float)
    h_nodes = np.asarray(problem.h(tgrid.nodes), dtype=float)
    if h_nodes.ndim == 0:
        h_nodes = np.full(tgrid.steps + 1, float(h_nodes))
    a_nodes = np.asarray(problem.a(tgrid.nodes), dtype=float)
    if a_nodes.ndim == 0:
        a_nodes = np.full(tgrid.steps + 1, float(a_nodes))

    ratio = h / r_int  # h/r_i, equals 1 at i = 1
    diag_geom = np.full(n_int, 2.0)
    upper_geom = -(ratio[:-1] + 1.0)   # row i, coefficient of u_{i+1}
    lower_geom = (ratio[1:] - 1.0)     # row i, coefficient of u_{i-1}

    n_paths = incr.shape[0]
    u = np.zeros((n_int, n_paths))
    if keep_history:
        hist = np.zeros((tgrid.steps + 1, rgrid.points + 1))

    scale = h * h / dt
    ab = np.empty((3, n_int))
    for n in range(1, tgrid.steps + 1):
        a_n = a_nodes[n]
        ab[0, 0] = 0.0
        ab[0, 1:] = a_n * upper_geom
        ab[1, :] = scale + a_n * diag_geom
        ab[2, :-1] = a_n * lower_geom
        ab[2, -1] = 0.0
        rhs = scale * u + (h * h * h_nodes[n]) * f_vals[:, None] \
            + scale * g_vals[:, None] * incr[:, n - 1][None, :]
        try:
            u = solve_banded((1, 1), ab, rhs, overwrite_b=True, check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise NumericError(f"tridiagonal solve broke down at time step {n}") from exc
        if keep_history:
            hist[n, 1:-1] = u[:, 0]
            hist[n, 0] = u[0, 0]  # origin symmetry closure u_0 = u_1

    if keep_history:
        return hist
    final = np.zeros((n_paths, rgrid.points + 1))
    final[:, 1:-1] = u.T
    final[:, 0] = u[0, :]
    return final


def solve_fd(problem: DiffusionProblem, rgrid: RadialGrid, tgrid: TimeGrid,
             path) -> FieldHistory:
    """Finite-difference solve along one driving path; full history."""
    path = _check_path(path, tgrid)
    incr = np.diff(path)[None, :]
    hist = _fd_run(problem, rgrid, tgrid, incr, keep_history=True)
    return FieldHistory(rgrid=rgrid, tgrid=tgrid, values=hist)


def fd_final_fields(problem: DiffusionProblem, rgrid: RadialGrid, tgrid: TimeGrid,
                    paths: np.ndarray) -> np.ndarray:
    """Final-time fields u(r, T) for a batch of paths; shape (P, N+1)."""
    paths = np.asarray(paths, dtype=float)
    return _fd_run(problem, rgrid, tgrid, np.diff(paths, axis=1), keep_history=False)


def mild_tables(problem: DiffusionProblem, rgrid: RadialGrid, tgrid: TimeGrid,
                n_modes: int):
    """Precomputed per-step decay and Simpson tables for the mild solver.

    Returns (decay, local, f_coeffs, g_coeffs) where decay[k-1, n-1] is
    exp(-lam_n (A_k - A_{k-1})) and local[k-1, n-1] the Simpson value of
    the deterministic convolution over step k with the exponential taken
    relative to t_k.
    """
    problem.validate_on(tgrid)
    acc = accumulate_a(problem.a, tgrid)
    lam = np.array([spectral.eigenvalue(n, problem.R0) for n in range(1, n_modes + 1)])
    a_nodes = acc.at_grid_nodes
    a_mids = acc.at_midpoints
    d_full = np.diff(a_nodes)              # A_k - A_{k-1}
    d_mid = a_nodes[1:] - a_mids           # A_k - A_mid
    nodes = tgrid.nodes
    mids = 0.5 * (nodes[:-1] + nodes[1:])

    def h_of(t):
        v = np.asarray(problem.h(t), dtype=float)
        return np.broadcast_to(v, np.shape(t)).astype(float) if v.ndim == 0 else v

    h_nodes = h_of(nodes)
    h_mids = h_of(mids)
    decay = np.exp(-np.outer(d_full, lam))
    local = (tgrid.dt / 6.0) * (
        h_nodes[:-1, None] * decay
        + 4.0 * h_mids[:, None] * np.exp(-np.outer(d_mid, lam))
        + h_nodes[1:, None]
    )
    f_coeffs = spectral.project(problem.f(rgrid.nodes), rgrid, n_modes)
    g_coeffs = spectral.project(problem.g(rgrid.nodes), rgrid, n_modes)
    return decay, local, f_coeffs, g_coeffs


def solve_mild(problem: DiffusionProblem, rgrid: RadialGrid, tgrid: TimeGrid,
               path, n_modes: int) -> ModalTrajectory:
    """Mild-solution modal trajectory u_n(t_k) along one driving path."""
    path = _check_path(path, tgrid)
    decay, local, f_coeffs, g_coeffs = mild_tables(problem, rgrid, tgrid, n_modes)
    incr = np.diff(path)
    coeffs = np.zeros((tgrid.steps + 1, n_modes))
    det = np.zeros(n_modes)
    sto = np.zeros(n_modes)
    for k in range(tgrid.steps):
        det = decay[k] * det + local[k]
        sto = decay[k] * (sto + incr[k])
        coeffs[k + 1] = f_coeffs * det + g_coeffs * sto
    return ModalTrajectory(tgrid=tgrid, coeffs=coeffs)


def mild_final_modes(problem: DiffusionProblem, rgrid: RadialGrid, tgrid: TimeGrid,
                     paths: np.ndarray, n_modes: int) -> np.ndarray:
    """Final-time modal coefficients u_n(T) for a batch of paths; (n_modes, P)."""
    paths = np.asarray(paths, dtype=float)
    decay, local, f_coeffs, g_coeffs = mild_tables(problem, rgrid, tgrid, n_modes)
    incr = np.diff(paths, axis=1)
    det = np.zeros(n_modes)
    sto = np.zeros((n_modes, paths.shape[0]))
    for k in range(tgrid.steps):
        det = decay[k] * det + local[k]
        sto = decay[k][:, None] * (sto + incr[:, k][None, :])
    return f_coeffs[:, None] * det[:, None] + g_coeffs[:, None] * sto


def final_time_modes(fieldh: FieldHistory, n_modes: int) -> np.ndarray:
    """Project the final-time field onto the first ``n_modes`` eigenfunctions."""
    return spectral.project(fieldh.values[-1], fieldh.rgrid, n_modes)
