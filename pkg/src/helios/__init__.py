"""Forward and inverse machinery for a spherically symmetric
production-diffusion equation whose source carries a fractional-Brownian
random component.

Subpackages: ``fbm`` (path synthesis), ``spectral`` (radial eigenbasis and
weighted quadrature), ``forward`` (finite-difference and mild-solution
solvers), ``ensemble`` (Monte-Carlo statistics of final-time data),
``inverse`` (kernel integrals and source reconstruction), ``cli``
(config-driven experiment driver).
"""

from . import cli, ensemble, fbm, forward, inverse, spectral
from .errors import ConfigError, DataError, DomainError, HeliosError, NumericError

__all__ = [
    "cli", "ensemble", "fbm", "forward", "inverse", "spectral",
    "ConfigError", "DataError", "DomainError", "HeliosError", "NumericError",
]

__version__ = "0.1.0"
