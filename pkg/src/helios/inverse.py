"""Kernel integrals, reconstruction of the source profiles, decay probes.

The final-time modal statistics determine the sources through

    E[u_n(T)]            = f_n * I_n,
    Cov(u_m(T), u_n(T))  = g_m g_n * E_mn,

where I_n is the deterministic convolution kernel

    I_n = int_0^T h(tau) exp(-lam_n int_tau^T a) dtau

and E_mn is the second moment of the pair of stochastic convolution
integrals driven by the same fractional Brownian path.  E_mn depends on
the Hurst index regime:

* H = 1/2: the Ito isometry collapses it to a single time integral,
  evaluated by composite Simpson.
* H > 1/2: a double time integral against the weakly singular weight
  alpha_H |t - s|^{2H-2}.  On a uniform cell grid the singular factor has
  an exact per-cell antiderivative, so each cell contributes the smooth
  factor at the cell midpoints times the exact cell mass; the lag
  structure makes the cell-mass matrix Toeplitz and the whole table one
  FFT-accelerated sandwich product.
* H < 1/2: the closed covariance kernel is awkward to integrate directly,
  so E_mn is estimated by Monte Carlo as the mean over simulated paths of
  the product of the two discretized Wiener integrals (left-endpoint sums,
  the same discretization the forward mild solver uses), with a standard
  error attached to every entry.

Dividing the data by these kernels and truncating at N1 modes is the sole
regularization; the division amplifies high-mode noise like lam_n and
lam_n^{min(2H,1)}, which is the instability this package lets you probe
directly (``decay_probe``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.linalg import matmul_toeplitz

from . import fbm, spectral
from .ensemble import EnsembleStats
from .errors import DomainError, NumericError
from .fbm import TimeGrid, check_hurst
from .forward import accumulate_a
from .spectral import RadialGrid

__all__ = [
    "KernelConfig",
    "KernelTable",
    "Reconstruction",
    "source_kernel",
    "noise_kernel",
    "build_kernel_table",
    "reconstruct",
    "decay_probe",
    "relative_error",
]

# Entries of E with magnitude below this are not inverted.
_DIVISION_FLOOR = 1e-14


@dataclass(frozen=True)
class KernelConfig:
    """Resolution knobs for the kernel integrals.

    quad_intervals : Simpson intervals for I_n and the H = 1/2 case.
    cells          : cells per axis for the H > 1/2 double integral.
    mc_paths       : simulated paths for the H < 1/2 estimator.
    mc_steps       : time steps of the simulated paths.
    mc_seed        : seed of the Monte-Carlo draws.
    mc_block       : paths per generation block (memory bound only).
    mc_se_rtol     : warn when an entry's standard error exceeds this
                     fraction of sqrt(E_mm E_nn).
    """

    quad_intervals: int = 2048
    cells: int = 4096
    mc_paths: int = 20000
    mc_steps: int = 2048
    mc_seed: int = 0
    mc_block: int = 4096
    mc_se_rtol: float = 0.05


@dataclass(frozen=True)
class KernelTable:
    """Source kernels I_n, noise kernels E_mn and their provenance."""

    source: np.ndarray
    noise: np.ndarray = field(repr=False)
    hurst: float
    source_method: str
    noise_method: str
    noise_se: Optional[np.ndarray] = field(default=None, repr=False)
    warnings: tuple = ()

    @property
    def n_modes(self) -> int:
        return self.source.size


@dataclass(frozen=True)
class Reconstruction:
    """Recovered modal data and synthesized profiles on a radial grid."""

    f_coeffs: np.ndarray
    g_products: np.ndarray = field(repr=False)
    f_values: np.ndarray = field(repr=False)
    g_squared_values: np.ndarray = field(repr=False)
    truncation: int
    skipped: tuple = ()
    f_error: Optional[float] = None
    g_squared_error: Optional[float] = None


def _lambdas(n_modes: int, R0: float) -> np.ndarray:
    return np.array([spectral.eigenvalue(n, R0) for n in range(1, n_modes + 1)])


def _simpson_nodes(a: Callable, T: float, intervals: int):
    """Refined Simpson nodes over [0, T], their weights, and A at the nodes."""
    grid = TimeGrid(T, intervals)
    acc = accumulate_a(a, grid)
    nodes = np.linspace(0.0, T, 2 * intervals + 1)
    w = np.ones(nodes.size)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    w *= (T / (2 * intervals)) / 3.0
    return nodes, w, acc.values


def _source_vector(lams: np.ndarray, h: Callable, a: Callable, T: float,
                   intervals: int) -> np.ndarray:
    nodes, w, avals = _simpson_nodes(a, T, intervals)
    hvals = np.broadcast_to(np.asarray(h(nodes), dtype=float), nodes.shape)
    decay = np.exp(-np.outer(avals[-1] - avals, lams))  # (nodes, modes)
    return (w * hvals) @ decay


def _noise_matrix_ito(lams: np.ndarray, a: Callable, T: float,
                      intervals: int) -> np.ndarray:
    nodes, w, avals = _simpson_nodes(a, T, intervals)
    decay = np.exp(-np.outer(avals[-1] - avals, lams))
    return decay.T @ (w[:, None] * decay)


def _noise_matrix_smooth(lams: np.ndarray, hurst: float, a: Callable, T: float,
                         cells: int) -> np.ndarray:
    # product rule: smooth factor at cell midpoints, singular |t-s|^{2H-2}
    # integrated exactly per cell; the cell-mass matrix is Toeplitz in the lag
    h2 = 2.0 * hurst
    delta = T / cells
    acc = accumulate_a(a, TimeGrid(T, cells))
    a_mid = acc.at_midpoints
    phi = np.exp(-np.outer(acc.values[-1] - a_mid, lams))  # (cells, modes)
    lag = np.arange(cells, dtype=float)
    mass = (np.abs(lag + 1) ** h2 - 2.0 * lag**h2 + np.abs(lag - 1) ** h2)
    mass *= delta**h2 / (h2 * (h2 - 1.0))
    alpha = hurst * (2.0 * hurst - 1.0)
    sandwich = phi.T @ matmul_toeplitz((mass, mass), phi)
    out = alpha * sandwich
    return 0.5 * (out + out.T)


def _noise_matrix_mc(lams: np.ndarray, hurst: float, a: Callable, T: float,
                     config: KernelConfig):
    """Monte-Carlo estimate of E_mn for H < 1/2, with per-entry standard error.

    The discretized Wiener integral along a simulated path is X_n =
    sum_j phi_n(t_{j-1}) dB_j.  Rewriting the sum over increments as a sum
    over node values B_j = (L z)_j lets every path's integrals be read off
    one standard-normal block without materializing the paths.
    """
    grid = TimeGrid(T, config.mc_steps)
    acc = accumulate_a(a, grid)
    phi = np.exp(-np.outer(acc.at_grid_nodes[-1] - acc.at_grid_nodes, lams))  # (M+1, modes)
    coeff = np.empty((config.mc_steps, lams.size))
    coeff[:-1] = phi[:-2] - phi[1:-1]
    coeff[-1] = phi[-2]
    factor = fbm.cholesky_factor(grid, hurst)
    weights = factor.T @ coeff  # (M, modes): X = weights^T z per path
    rng = np.random.default_rng(config.mc_seed)
    total = np.zeros((lams.size, lams.size))
    done = 0
    while done < config.mc_paths:
        size = min(config.mc_block, config.mc_paths - done)
        z = rng.standard_normal((config.mc_steps, size))
        x = weights.T @ z
        total += x @ x.T
        done += size
    est = total / config.mc_paths
    est = 0.5 * (est + est.T)
    d = np.diag(est)
    se = np.sqrt((np.outer(d, d) + est**2) / config.mc_paths)
    return est, se


def source_kernel(n: int, h: Callable, a: Callable, T: float, R0: float,
                  intervals: int = 2048) -> float:
    """I_n by composite Simpson; positive under a positive lower bound on h."""
    lam = np.array([spectral.eigenvalue(n, R0)])
    value = float(_source_vector(lam, h, a, T, intervals)[0])
    if not np.isfinite(value) or value <= 0.0:
        raise NumericError(f"source kernel I_{n} = {value!r} is not positive")
    return value


def noise_kernel(m: int, n: int, hurst: float, a: Callable, T: float, R0: float,
                 config: Optional[KernelConfig] = None, return_se: bool = False):
    """E_mn for one mode pair; regime picked by the Hurst index.

    With ``return_se`` the Monte-Carlo standard error is returned alongside
    (zero for the deterministic quadrature regimes).
    """
    hurst = check_hurst(hurst)
    config = config or KernelConfig()
    lams = _lambdas(max(m, n), R0)
    idx = (m - 1, n - 1)
    if hurst == 0.5:
        value, se = _noise_matrix_ito(lams, a, T, config.quad_intervals)[idx], 0.0
    elif hurst > 0.5:
        value, se = _noise_matrix_smooth(lams, hurst, a, T, config.cells)[idx], 0.0
    else:
        est, se_mat = _noise_matrix_mc(lams, hurst, a, T, config)
        value, se = est[idx], float(se_mat[idx])
    value = float(value)
    return (value, se) if return_se else value


def build_kernel_table(n_modes: int, hurst: float, a: Callable, h: Callable,
                       T: float, R0: float,
                       config: Optional[KernelConfig] = None) -> KernelTable:
    """All kernels for modes 1..n_modes in one pass."""
    hurst = check_hurst(hurst)
    config = config or KernelConfig()
    lams = _lambdas(n_modes, R0)
    source = _source_vector(lams, h, a, T, config.quad_intervals)
    if not np.all(np.isfinite(source)) or np.any(source <= 0.0):
        bad = int(np.argmin(source)) + 1
        raise NumericError(f"source kernel I_{bad} is not positive; quadrature breakdown")
    noise_se = None
    warnings = ()
    if hurst == 0.5:
        noise = _noise_matrix_ito(lams, a, T, config.quad_intervals)
        method = "quadrature"
    elif hurst > 0.5:
        noise = _noise_matrix_smooth(lams, hurst, a, T, config.cells)
        method = "quadrature"
    else:
        noise, noise_se = _noise_matrix_mc(lams, hurst, a, T, config)
        method = "monte-carlo"
        scale = np.sqrt(np.outer(np.diag(noise), np.diag(noise)))
        bad = np.argwhere(noise_se > config.mc_se_rtol * scale)
        warnings = tuple((int(i) + 1, int(j) + 1) for i, j in bad if i <= j)
    return KernelTable(source=source, noise=noise, hurst=hurst,
                       source_method="quadrature", noise_method=method,
                       noise_se=noise_se, warnings=warnings)


def reconstruct(stats: EnsembleStats, table: KernelTable, rgrid: RadialGrid,
                truth_f=None, truth_g_squared=None) -> Reconstruction:
    """Invert the kernels on the sample statistics and synthesize profiles.

    Entries of E below the division floor are skipped (product set to zero)
    and reported.  When ground-truth profiles on the grid are supplied the
    relative weighted-L2 errors are attached.
    """
    n_modes = table.n_modes
    if stats.mean.size < n_modes:
        raise DomainError(
            f"statistics cover {stats.mean.size} modes, kernel table needs {n_modes}"
        )
    mean = stats.mean[:n_modes]
    cov = stats.cov[:n_modes, :n_modes]
    f_coeffs = mean / table.source
    products = np.zeros_like(cov)
    ok = np.abs(table.noise) >= _DIVISION_FLOOR
    products[ok] = cov[ok] / table.noise[ok]
    skipped = tuple((int(i) + 1, int(j) + 1) for i, j in np.argwhere(~ok) if i <= j)
    products = 0.5 * (products + products.T)
    f_values = spectral.synthesize(f_coeffs, rgrid)
    g_squared = spectral.synthesize_squared(products, rgrid)
    f_err = None if truth_f is None else relative_error(f_values, truth_f, rgrid)
    g_err = None if truth_g_squared is None else relative_error(g_squared, truth_g_squared, rgrid)
    return Reconstruction(f_coeffs=f_coeffs, g_products=products, f_values=f_values,
                          g_squared_values=g_squared, truncation=n_modes,
                          skipped=skipped, f_error=f_err, g_squared_error=g_err)


@dataclass(frozen=True)
class DecayProbe:
    """Kernel magnitudes over a mode range and their log-log slopes."""

    modes: np.ndarray
    lams: np.ndarray
    source: np.ndarray
    noise_diag: np.ndarray
    slope_source: float
    slope_noise: float


def decay_probe(n_lo: int, n_hi: int, hurst: float, a: Callable, h: Callable,
                T: float, R0: float,
                config: Optional[KernelConfig] = None) -> DecayProbe:
    """Least-squares log-log slopes of I_n and E_nn against lam_n."""
    if n_hi <= n_lo or n_lo < 1:
        raise DomainError(f"need 1 <= n_lo < n_hi, got ({n_lo}, {n_hi})")
    table = build_kernel_table(n_hi, hurst, a, h, T, R0, config)
    modes = np.arange(n_lo, n_hi + 1)
    lams = _lambdas(n_hi, R0)[n_lo - 1:]
    source = table.source[n_lo - 1:]
    noise_diag = np.diag(table.noise)[n_lo - 1:]
    slope_source = float(np.polyfit(np.log(lams), np.log(np.abs(source)), 1)[0])
    slope_noise = float(np.polyfit(np.log(lams), np.log(np.abs(noise_diag)), 1)[0])
    return DecayProbe(modes=modes, lams=lams, source=source, noise_diag=noise_diag,
                      slope_source=slope_source, slope_noise=slope_noise)


def relative_error(recon, truth, grid: RadialGrid) -> float:
    """Weighted-L2 error of ``recon`` against ``truth``; absolute if truth is 0."""
    recon = np.asarray(recon, dtype=float)
    truth = np.asarray(truth, dtype=float)
    diff_norm = spectral.weighted_l2_norm(recon - truth, grid)
    truth_norm = spectral.weighted_l2_norm(truth, grid)
    return diff_norm / truth_norm if truth_norm > 0 else diff_norm
