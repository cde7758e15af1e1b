"""Fractional Poisson processes: simulation, estimation, GoF, prediction."""

from .errors import DataError, DomainError
from .process import (
    ArrivalPath,
    CountObservation,
    FppParams,
    McPmfEstimate,
    PmfValue,
    PoissonParams,
    count_at,
    fpp_mean,
    fpp_pmf,
    fpp_pmf_mc,
    fpp_variance,
    sample_interarrival,
    simulate_counts,
    simulate_path,
)
from .rng import RngStream
from .special import beta_fn, log_gamma, mittag_leffler

__all__ = [
    "ArrivalPath",
    "CountObservation",
    "DataError",
    "DomainError",
    "FppParams",
    "McPmfEstimate",
    "PmfValue",
    "PoissonParams",
    "RngStream",
    "beta_fn",
    "count_at",
    "fpp_mean",
    "fpp_pmf",
    "fpp_pmf_mc",
    "fpp_variance",
    "log_gamma",
    "mittag_leffler",
    "sample_interarrival",
    "simulate_counts",
    "simulate_path",
]

__version__ = "0.1.0"
