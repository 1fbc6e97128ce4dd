"""Exact tools and Monte Carlo experiments for central limit theorems of
Markov chain reward sums and averaged TD(0) iterates."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ConfigError,
    DegenerateCovarianceError,
    DimensionError,
    DomainError,
    NotPSDError,
    NumericalError,
    StabilityError,
    StructureError,
)
from .markov import (  # noqa: E402
    FiniteMarkovChain,
    asymptotic_covariance,
    solve_poisson,
    stationary,
)
from .stein import chain_bound, martingale_clt_bound, stein_constants  # noqa: E402
from .td import TDModel, mean_dynamics, simulate_ensemble, simulate_td  # noqa: E402

__all__ = [
    "ConfigError",
    "DegenerateCovarianceError",
    "DimensionError",
    "DomainError",
    "FiniteMarkovChain",
    "NotPSDError",
    "NumericalError",
    "StabilityError",
    "StructureError",
    "TDModel",
    "asymptotic_covariance",
    "chain_bound",
    "martingale_clt_bound",
    "mean_dynamics",
    "simulate_ensemble",
    "simulate_td",
    "solve_poisson",
    "stationary",
    "stein_constants",
]
