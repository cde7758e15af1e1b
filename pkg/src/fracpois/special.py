"""Special functions used throughout the package.

The three public entry points are ``log_gamma``, ``beta_fn`` and
``mittag_leffler``.  The Mittag-Leffler function is only supported for
arguments on the non-positive real axis, which is the regime needed for
waiting-time survival probabilities and zero-count probabilities of the
fractional Poisson process.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.integrate import quad

from .errors import DomainError

# Series cutoff: stop once the next term is negligible relative to the
# partial sum; the hard cap guards against pathological non-convergence.
_SERIES_RTOL = 1e-16
_SERIES_MAX_TERMS = 10_000
# Beyond this magnitude the alternating series loses too many digits in
# double precision and the integral representation takes over.
_SERIES_Z_LIMIT = 5.0


def log_gamma(x: float) -> float:
    """Natural log of the gamma function for strictly positive arguments.

    Backed by the platform ``lgamma`` (a standard minimax implementation),
    which the test suite validates against a 25-digit reference on
    [1e-3, 1e4].

    Parameters
    ----------
    x : float
        Strictly positive, finite argument.

    Returns
    -------
    float
        ln Gamma(x).
    """
    if not math.isfinite(x) or x <= 0.0:
        raise DomainError(f"log_gamma requires a finite x > 0, got {x!r}")
    return math.lgamma(x)


def beta_fn(a: float, b: float) -> float:
    """Euler beta function B(a, b) for strictly positive arguments."""
    if not math.isfinite(a) or a <= 0.0 or not math.isfinite(b) or b <= 0.0:
        raise DomainError(f"beta_fn requires finite a, b > 0, got ({a!r}, {b!r})")
    return math.exp(math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b))


def _ml_series(order: float, z: float) -> float:
    """Power series sum_k z^k / Gamma(order*k + 1), adaptively truncated."""
    total = 1.0  # k = 0 term
    term = 1.0
    k = 0
    log_abs_z = math.log(abs(z)) if z != 0.0 else -math.inf
    while k < _SERIES_MAX_TERMS:
        k += 1
        log_mag = k * log_abs_z - math.lgamma(order * k + 1.0)
        term = math.copysign(math.exp(log_mag), -1.0 if k % 2 else 1.0)
        if abs(term) < _SERIES_RTOL * max(abs(total), 1e-300):
            break
        total += term
    return total


def _ml_integral(order: float, x: float) -> float:
    """Spectral representation of E_order(-x) for 0 < order < 1, x > 0.

    E_b(-x) = sin(b*pi)/(b*pi) * int_0^inf exp(-(x*s)^(1/b))
              / (s^2 + 2*s*cos(b*pi) + 1) ds

    The integrand is smooth and decays super-exponentially, so adaptive
    quadrature on a split interval reaches well below the 1e-8 target.
    """
    inv = 1.0 / order
    c = math.cos(order * math.pi)

    def integrand(s: float) -> float:
        return math.exp(-((x * s) ** inv)) / (s * s + 2.0 * c * s + 1.0)

    # Integrand support is concentrated around s ~ 1/x; split there.
    cut = 1.0 / x
    part1, _ = quad(integrand, 0.0, cut, epsabs=1e-12, epsrel=1e-12, limit=200)
    part2, _ = quad(integrand, cut, np.inf, epsabs=1e-12, epsrel=1e-12, limit=200)
    return math.sin(order * math.pi) / (order * math.pi) * (part1 + part2)


def mittag_leffler(order: float, z):
    """One-parameter Mittag-Leffler function E_order(z) for z <= 0.

    Uses the defining power series for moderate arguments and switches to
    an integral (spectral) representation for z < -5 where the alternating
    series cancels catastrophically in double precision.  Absolute error
    is below 1e-8 across the supported domain; for order == 1 the result
    is exactly ``exp(z)``.

    Parameters
    ----------
    order : float
        Fractional order in (0, 1].
    z : float or ndarray
        Argument(s), each <= 0.

    Returns
    -------
    float or ndarray
        E_order(z), in [0, 1].
    """
    if not (0.0 < order <= 1.0) or not math.isfinite(order):
        raise DomainError(f"mittag_leffler requires order in (0, 1], got {order!r}")
    arr = np.asarray(z, dtype=float)
    if arr.size and (np.any(arr > 0.0) or not np.all(np.isfinite(arr))):
        raise DomainError("mittag_leffler requires finite z <= 0")
    scalar = np.isscalar(z) or getattr(z, "ndim", 0) == 0

    if order == 1.0:
        out = np.exp(arr)
        return float(out) if scalar else out

    out = np.empty_like(arr, dtype=float)
    flat = arr.ravel()
    res = out.ravel()
    small = np.abs(flat) <= _SERIES_Z_LIMIT
    for i in np.nonzero(small)[0]:
        res[i] = _ml_series(order, flat[i])
    for i in np.nonzero(~small)[0]:
        res[i] = _ml_integral(order, -flat[i])
    return float(out) if scalar else out
