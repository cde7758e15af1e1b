"""The fractional Poisson process model.

Parameters, exact inter-arrival sampling (three-uniform formula), path
simulation, the count probability mass function with a cancellation
guard and Monte Carlo fallback, and the closed-form moments.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Sequence, Union

import mpmath as mp
import numpy as np
from scipy.special import gammaln

from .errors import DomainError
from .rng import RngStream, open_uniform
from .special import log_gamma, beta_fn, mittag_leffler

# --------------------------------------------------------------------------
# Parameters and observation types
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class FppParams:
    """Fractional Poisson process parameters.

    Attributes
    ----------
    rate : float
        Rate constant, events per day^order; strictly positive.
    order : float
        Fractional order in (0, 1].  ``order == 1`` recovers the
        ordinary Poisson process.
    """

    rate: float
    order: float

    def __post_init__(self):
        if not (math.isfinite(self.rate) and self.rate > 0.0):
            raise DomainError(f"rate must be finite and > 0, got {self.rate!r}")
        if not (0.0 < self.order <= 1.0):
            raise DomainError(f"order must lie in (0, 1], got {self.order!r}")

    @property
    def mean_coefficient(self) -> float:
        """Coefficient q = rate / Gamma(1 + order) of the t^order mean growth."""
        return self.rate / math.exp(log_gamma(1.0 + self.order))


@dataclass(frozen=True)
class PoissonParams:
    """Ordinary Poisson process with rate in events per day."""

    rate: float

    def __post_init__(self):
        if not (math.isfinite(self.rate) and self.rate > 0.0):
            raise DomainError(f"rate must be finite and > 0, got {self.rate!r}")


ProcessParams = Union[FppParams, PoissonParams]


@dataclass(frozen=True, eq=False)
class ArrivalPath:
    """Nondecreasing event times on [0, horizon]."""

    times: np.ndarray
    horizon: float

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        object.__setattr__(self, "times", times)
        if not (math.isfinite(self.horizon) and self.horizon > 0.0):
            raise DomainError(f"horizon must be finite and > 0, got {self.horizon!r}")
        if times.size:
            if not np.all(np.isfinite(times)):
                raise DomainError("arrival times must be finite")
            if np.any(np.diff(times) < 0.0):
                raise DomainError("arrival times must be nondecreasing")
            if times[0] < 0.0 or times[-1] > self.horizon:
                raise DomainError("arrival times must lie in [0, horizon]")

    def __len__(self) -> int:
        return int(self.times.size)


@dataclass(frozen=True)
class CountObservation:
    """Number of events observed at or before a threshold time."""

    count: int
    threshold: float

    def __post_init__(self):
        if self.count < 0:
            raise DomainError("count must be nonnegative")
        if not (math.isfinite(self.threshold) and self.threshold > 0.0):
            raise DomainError("threshold must be finite and > 0")


@dataclass(frozen=True)
class PmfValue:
    """Result of the truncated pmf series with a reliability flag.

    ``reliable`` is False when the alternating series lost too many
    digits to cancellation (largest term exceeding 1e12 times the
    result) or the value fell outside [0, 1 + 1e-9].
    """

    value: float
    reliable: bool
    terms_used: int


@dataclass(frozen=True)
class McPmfEstimate:
    """Monte Carlo pmf estimate with a binomial standard error."""

    value: float
    std_error: float
    sims: int
    degenerate: bool


# --------------------------------------------------------------------------
# Inter-arrival sampling
# --------------------------------------------------------------------------


def interarrival_from_uniforms(params: ProcessParams, u1: float,
                               u2: float | None = None,
                               u3: float | None = None) -> float:
    """Waiting-time transform applied to explicit uniform draws.

    For the ordinary Poisson process (or ``order == 1``) this is the
    exponential inverse transform ``-ln(u1) / rate`` and consumes only
    ``u1``.  Otherwise all three uniforms feed the exact Mittag-Leffler
    sampler (Kanter's construction):

        T = rate^(-1/b) * |ln u1|^(1/b)
            * sin(b*pi*u2) * sin((1-b)*pi*u2)^(1/b - 1)
            / ( sin(pi*u2)^(1/b) * |ln u3|^(1/b - 1) )

    The rate enters only through the prefactor, so rescaling the rate
    rescales the draw exactly.
    """
    us = (u1,) if _order_of(params) == 1.0 else (u1, u2, u3)
    for u in us:
        if u is None or not (0.0 < u < 1.0):
            raise DomainError("uniform draws must lie in the open interval (0, 1)")
    return float(_interarrival_transform(params, np.asarray(u1),
                                         None if u2 is None else np.asarray(u2),
                                         None if u3 is None else np.asarray(u3)))


def _order_of(params: ProcessParams) -> float:
    return params.order if isinstance(params, FppParams) else 1.0


def _interarrival_transform(params, u1, u2, u3):
    b = _order_of(params)
    scale = params.rate ** (-1.0 / b)
    if b == 1.0:
        return scale * -np.log(u1)
    # Log-space form of the three-uniform product; algebraically identical
    # but cheaper than four fractional powers on large arrays.  The cap
    # keeps exp() finite when tiny orders blow the exponent past the
    # double range; such draws exceed any horizon either way.
    inv = 1.0 / b
    log_unit = (
        inv * np.log(-np.log(u1))
        + np.log(np.sin(b * math.pi * u2))
        + (inv - 1.0) * (np.log(np.sin((1.0 - b) * math.pi * u2))
                         - np.log(-np.log(u3)))
        - inv * np.log(np.sin(math.pi * u2))
    )
    with np.errstate(over="ignore"):
        return scale * np.exp(np.minimum(log_unit, 709.0))


def _interarrival_batch(params: ProcessParams, gen: np.random.Generator,
                        size) -> np.ndarray:
    """Vectorized waiting-time draws; consumes 1 or 3 uniforms per draw."""
    u1 = open_uniform(gen, size)
    if _order_of(params) == 1.0:
        return _interarrival_transform(params, u1, None, None)
    u2 = open_uniform(gen, size)
    u3 = open_uniform(gen, size)
    return _interarrival_transform(params, u1, u2, u3)


def sample_interarrival(params: ProcessParams, rng: RngStream) -> float:
    """One waiting-time draw from the process's inter-arrival law."""
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    return float(_interarrival_batch(params, gen, None))


def waiting_time_survival(params: FppParams, tau):
    """P(T > tau) = E_order(-rate * tau^order) for the waiting time T."""
    t = np.asarray(tau, dtype=float)
    if np.any(t < 0.0):
        raise DomainError("tau must be nonnegative")
    return mittag_leffler(params.order, -params.rate * t ** params.order)


# --------------------------------------------------------------------------
# Path simulation and counting
# --------------------------------------------------------------------------

_CHUNK = 64


def simulate_path(params: ProcessParams, horizon: float, rng: RngStream) -> ArrivalPath:
    """Cumulative waiting times truncated at the horizon.

    The first arrival strictly after the horizon is discarded; an
    arrival exactly at the horizon is kept.
    """
    if not (math.isfinite(horizon) and horizon > 0.0):
        raise DomainError(f"horizon must be finite and > 0, got {horizon!r}")
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    pieces = []
    current = 0.0
    while True:
        chunk = np.cumsum(_interarrival_batch(params, gen, _CHUNK)) + current
        inside = chunk[chunk <= horizon]
        pieces.append(inside)
        if inside.size < _CHUNK:
            break
        current = float(chunk[-1])
    times = np.concatenate(pieces) if pieces else np.empty(0)
    return ArrivalPath(times=times, horizon=horizon)


def simulate_counts(params: ProcessParams, t: float, n_paths: int,
                    rng: RngStream) -> np.ndarray:
    """Event counts in (0, t] for ``n_paths`` independent paths.

    Equivalent to ``count_at(simulate_path(...), t)`` in distribution but
    vectorized across paths, which is what the Monte Carlo pmf and the
    estimator studies need.
    """
    if not (math.isfinite(t) and t > 0.0):
        raise DomainError("t must be finite and > 0")
    if n_paths < 1:
        raise DomainError("n_paths must be >= 1")
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    counts = np.zeros(n_paths, dtype=np.int64)
    elapsed = np.zeros(n_paths)
    active = np.arange(n_paths)
    while active.size:
        draws = _interarrival_batch(params, gen, (active.size, _CHUNK))
        times = np.cumsum(draws, axis=1) + elapsed[active, None]
        if not np.any(times[:, -1] > elapsed[active]):
            raise RuntimeError(
                "path simulation is not advancing; parameters are outside "
                "the numerically representable regime")
        counts[active] += (times <= t).sum(axis=1)
        elapsed[active] = times[:, -1]
        active = active[times[:, -1] <= t]
    return counts


def count_at(path: ArrivalPath, t: float) -> CountObservation:
    """Number of arrivals in (0, t].

    The event at time 0 exactly (the origin of ingested real data) is
    excluded; the boundary t is inclusive.
    """
    if not (0.0 < t <= path.horizon):
        raise DomainError(f"t must lie in (0, horizon], got {t!r}")
    inside = np.count_nonzero((path.times > 0.0) & (path.times <= t))
    return CountObservation(count=int(inside), threshold=float(t))


def export_paths(paths: Sequence[ArrivalPath], fp) -> None:
    """Write paths as CSV rows ``path_id,event_index,time`` (6 decimals)."""
    writer = csv.writer(fp, lineterminator="\n")
    writer.writerow(["path_id", "event_index", "time"])
    for pid, path in enumerate(paths):
        for idx, t in enumerate(path.times):
            writer.writerow([pid, idx, f"{t:.6f}"])


# --------------------------------------------------------------------------
# Probability mass function
# --------------------------------------------------------------------------

DEFAULT_SERIES_TERMS = 49  # truncation index used for all likelihood work

_CANCEL_GUARD = 1e12        # reliability threshold on max_term / |result|
_TERM_REL_ERR = 3e-15       # double-precision error model per series term
_ESCALATION_MAX_DIGITS = 3000


def fpp_pmf(params: FppParams, n: int, t: float,
            k_max: int = DEFAULT_SERIES_TERMS, abs_tol: float = 1e-8) -> PmfValue:
    """P(N(t) = n) via the truncated alternating series.

    The series is evaluated in signed log-magnitude form with exact
    (compensated) summation.  When the double-precision pass cannot
    reach ``abs_tol`` because of cancellation but the series has
    converged within ``k_max`` terms, the same truncated sum is
    re-evaluated at elevated precision.  Reliability is still judged by
    the cancellation guard: results where the largest term exceeds 1e12
    times the value, or that leave [0, 1 + 1e-9], are flagged.

    ``t == 0`` returns the standard initial condition P(N(0)=0) = 1.
    """
    if n < 0 or int(n) != n:
        raise DomainError("n must be a nonnegative integer")
    if not (math.isfinite(t) and t >= 0.0):
        raise DomainError("t must be finite and >= 0")
    if k_max < 0:
        raise DomainError("k_max must be >= 0")
    if t == 0.0:
        return PmfValue(value=1.0 if n == 0 else 0.0, reliable=True, terms_used=0)

    values, reliable = _pmf_values(params, np.array([int(n)]), t,
                                   k_max=k_max, abs_tol=abs_tol)
    return PmfValue(value=float(values[0]), reliable=bool(reliable[0]),
                    terms_used=k_max + 1)


def _pmf_values(params: FppParams, ns: np.ndarray, t: float,
                k_max: int = DEFAULT_SERIES_TERMS,
                abs_tol: float = 1e-8) -> tuple[np.ndarray, np.ndarray]:
    """Joint series evaluation of the pmf at several counts.

    Same algorithm as :func:`fpp_pmf` but broadcast over ``ns``, which is
    what likelihood evaluations need; returns (values, reliable) arrays.
    """
    b = params.order
    log_x = math.log(params.rate) + b * math.log(t)
    ns = np.asarray(ns, dtype=np.int64)
    ks = np.arange(k_max + 1)
    nk = ns[:, None] + ks[None, :]
    log_mag = (
        nk * log_x
        + gammaln(nk + 1.0)
        - gammaln(ns + 1.0)[:, None]
        - gammaln(ks + 1.0)[None, :]
        - gammaln(b * nk + 1.0)
    )
    signs = np.where(ks % 2 == 0, 1.0, -1.0)
    row_max = log_mag.max(axis=1)
    values = np.empty(ns.size)
    reliable = np.empty(ns.size, dtype=bool)
    for i in range(ns.size):
        max_log = float(row_max[i])
        row = log_mag[i]
        if max_log <= 700.0:
            value = math.fsum(signs * np.exp(row))
            est_err = math.exp(max_log) * _TERM_REL_ERR
        else:
            scaled = math.fsum(signs * np.exp(row - max_log))
            with np.errstate(over="ignore"):
                value = float(scaled * np.exp(max_log))
            est_err = math.inf
        converged = row.argmax() < k_max and row[-1] < max_log - 35.0
        if converged and est_err > abs_tol:
            guess_log = math.log(abs(value)) if (math.isfinite(value) and value != 0.0) \
                else -math.exp(log_x)
            digits = (max_log - min(guess_log, 0.0)) / math.log(10.0) + 30.0
            if digits <= _ESCALATION_MAX_DIGITS:
                value = _pmf_series_mp(params.rate, b, t, int(ns[i]), k_max,
                                       int(digits))
        if math.isfinite(value) and value > 0.0:
            cancel_ok = max_log - math.log(value) <= math.log(_CANCEL_GUARD)
        else:
            cancel_ok = max_log <= math.log(_CANCEL_GUARD)
        values[i] = value
        reliable[i] = bool(cancel_ok and math.isfinite(value)
                           and 0.0 <= value <= 1.0 + 1e-9)
    return values, reliable


def _pmf_series_mp(rate: float, order: float, t: float, n: int,
                   k_max: int, dps: int) -> float:
    """Same truncated series summed at ``dps`` decimal digits."""
    with mp.workdps(dps):
        log_x = mp.log(mp.mpf(rate)) + mp.mpf(order) * mp.log(mp.mpf(t))
        lg_n1 = mp.loggamma(n + 1)
        total = mp.mpf(0)
        for k in range(k_max + 1):
            log_term = (
                (n + k) * log_x
                + mp.loggamma(n + k + 1)
                - lg_n1
                - mp.loggamma(k + 1)
                - mp.loggamma(mp.mpf(order) * (k + n) + 1)
            )
            term = mp.e ** log_term
            total += -term if k % 2 else term
        return float(total)


def fpp_pmf_mc(params: FppParams, n: int, t: float, sims: int,
               rng: RngStream) -> McPmfEstimate:
    """Monte Carlo estimate of P(N(t) = n) from simulated path counts."""
    if sims < 1000:
        raise DomainError("sims must be >= 1000")
    if n < 0:
        raise DomainError("n must be nonnegative")
    counts = simulate_counts(params, t, sims, rng)
    hits = int(np.count_nonzero(counts == n))
    p = hits / sims
    se = math.sqrt(p * (1.0 - p) / sims)
    return McPmfEstimate(value=p, std_error=se, sims=sims,
                         degenerate=hits in (0, sims))


# --------------------------------------------------------------------------
# Moments
# --------------------------------------------------------------------------


def variance_coefficient(order: float) -> float:
    """Overdispersion coefficient order*B(order, 1/2) / 2^(2*order - 1).

    Equals 1 at order 1 and exceeds 1 for order < 1, which is what makes
    the process overdispersed relative to Poisson counts.
    """
    return order * beta_fn(order, 0.5) / 2.0 ** (2.0 * order - 1.0)


def fpp_mean(params: FppParams, t: float) -> float:
    """Expected number of events by time t: q * t^order."""
    if not (math.isfinite(t) and t > 0.0):
        raise DomainError("t must be finite and > 0")
    return params.mean_coefficient * t ** params.order


def fpp_variance(params: FppParams, t: float,
                 form: str = "beta-coefficient") -> float:
    """Count variance at time t in either of two algebraically equal forms.

    ``beta-coefficient``:
        m * (1 + m * (variance_coefficient(order) - 1)) with m the mean.
    ``alternative``:
        m + (rate * t^order)^2 / order
          * (1 / Gamma(2*order) - 1 / (order * Gamma(order)^2)).
    """
    m = fpp_mean(params, t)
    b = params.order
    if form == "beta-coefficient":
        return m * (1.0 + m * (variance_coefficient(b) - 1.0))
    if form == "alternative":
        x = params.rate * t ** b
        bracket = (1.0 / math.exp(log_gamma(2.0 * b))
                   - 1.0 / (b * math.exp(2.0 * log_gamma(b))))
        return m + x * x / b * bracket
    raise DomainError(f"unknown variance form {form!r}")
