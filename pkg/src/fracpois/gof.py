"""Goodness-of-fit and normality diagnostics.

Empirical CDFs, one- and two-sample Kolmogorov-Smirnov tests with
asymptotic p-values, normal Q-Q data, and the model-vs-data comparison
protocol used on event-time records: actual arrivals in (0, t] against
pooled arrivals of simulated paths.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import ndtri

from .errors import DomainError
from .process import ProcessParams, simulate_path
from .rng import RngStream

# Kolmogorov survival series: terms added until below this threshold.
_KOLMOGOROV_ATOL = 1e-10
# Below this argument the series value is 1 to double precision.
_KOLMOGOROV_SMALL = 0.15


@dataclass(frozen=True, eq=False)
class Ecdf:
    """Right-continuous empirical CDF; ties stack."""

    points: np.ndarray
    steps: np.ndarray

    def __call__(self, x) -> np.ndarray | float:
        idx = np.searchsorted(self.points, x, side="right")
        out = np.where(idx > 0, self.steps[np.maximum(idx - 1, 0)], 0.0)
        return float(out) if np.isscalar(x) else out


@dataclass(frozen=True)
class KsResult:
    """Kolmogorov-Smirnov statistic with its asymptotic p-value."""

    statistic: float
    p_value: float
    n_eff: float


def ecdf(samples: Sequence[float]) -> Ecdf:
    """Empirical CDF of a nonempty sample."""
    x = np.sort(np.asarray(samples, dtype=float))
    if x.size == 0:
        raise DomainError("ecdf requires at least one sample")
    return Ecdf(points=x, steps=np.arange(1, x.size + 1) / x.size)


def kolmogorov_survival(u: float) -> float:
    """Asymptotic K-S null survival Q(u) = 2 sum (-1)^(k-1) exp(-2 k^2 u^2)."""
    if u <= 0.0:
        return 1.0
    if u <= _KOLMOGOROV_SMALL:
        return 1.0
    total = 0.0
    k = 1
    sign = 1.0
    while True:
        term = math.exp(-2.0 * k * k * u * u)
        if term < _KOLMOGOROV_ATOL:
            break
        total += sign * term
        sign = -sign
        k += 1
    return min(max(2.0 * total, 0.0), 1.0)


def ks_two_sample(x: Sequence[float], y: Sequence[float]) -> KsResult:
    """Two-sample K-S test with the asymptotic p-value.

    D is the exact supremum of |F_x - F_y| over the merged sample grid;
    the effective sample size is |x||y| / (|x| + |y|).
    """
    xs = np.sort(np.asarray(x, dtype=float))
    ys = np.sort(np.asarray(y, dtype=float))
    if xs.size == 0 or ys.size == 0:
        raise DomainError("both samples must be nonempty")
    grid = np.concatenate([xs, ys])
    fx = np.searchsorted(xs, grid, side="right") / xs.size
    fy = np.searchsorted(ys, grid, side="right") / ys.size
    d = float(np.max(np.abs(fx - fy)))
    n_eff = xs.size * ys.size / (xs.size + ys.size)
    return KsResult(statistic=d, p_value=kolmogorov_survival(math.sqrt(n_eff) * d),
                    n_eff=n_eff)


def ks_one_sample(x: Sequence[float], cdf: Callable) -> KsResult:
    """One-sample K-S test against a distribution function."""
    xs = np.sort(np.asarray(x, dtype=float))
    if xs.size == 0:
        raise DomainError("sample must be nonempty")
    f = np.asarray(cdf(xs), dtype=float)
    if np.any(f < 0.0) or np.any(f > 1.0) or not np.all(np.isfinite(f)):
        raise DomainError("cdf must map into [0, 1]")
    n = xs.size
    k = np.arange(1, n + 1)
    d = float(max(np.max(np.abs(k / n - f)), np.max(np.abs((k - 1) / n - f))))
    return KsResult(statistic=d, p_value=kolmogorov_survival(math.sqrt(n) * d),
                    n_eff=float(n))


def qq_normal(samples: Sequence[float]) -> np.ndarray:
    """Normal Q-Q pairs using the (k - 0.5)/n plotting positions.

    Returns an (n, 2) array of (theoretical quantile, standardized
    sample quantile) pairs; the sample is standardized by its mean and
    (ddof=1) standard deviation.
    """
    x = np.sort(np.asarray(samples, dtype=float))
    if x.size < 2:
        raise DomainError("qq_normal requires at least two samples")
    sd = x.std(ddof=1)
    if sd == 0.0:
        raise DomainError("sample variance is zero")
    probs = (np.arange(1, x.size + 1) - 0.5) / x.size
    return np.column_stack([ndtri(probs), (x - x.mean()) / sd])


def ks_model_comparison(event_times: Sequence[float], params: ProcessParams,
                        t: float, rng: RngStream, n_paths: int = 1) -> KsResult:
    """Two-sample K-S between observed arrivals and simulated ones.

    Compares the actual event times in (0, t] with the pooled arrivals
    of ``n_paths`` freshly simulated paths restricted to (0, t].  A
    simulation with no arrivals in the window counts as maximal
    discrepancy (D = 1, p = 0) rather than an error, so large seeded
    batteries never abort on the occasional empty path.
    """
    actual = np.asarray(event_times, dtype=float)
    actual = actual[(actual > 0.0) & (actual <= t)]
    if actual.size == 0:
        raise DomainError("no observed events in (0, t]")
    pooled = []
    for j in range(n_paths):
        path = simulate_path(params, t, rng.substream(j))
        pooled.append(path.times[path.times > 0.0])
    sim = np.concatenate(pooled) if pooled else np.empty(0)
    if sim.size == 0:
        return KsResult(statistic=1.0, p_value=0.0, n_eff=0.0)
    return ks_two_sample(actual, sim)


# --------------------------------------------------------------------------
# Data emission
# --------------------------------------------------------------------------


def export_ecdf(samples: Sequence[float], fp) -> None:
    """Write ECDF steps as CSV rows ``x,F``."""
    e = ecdf(samples)
    writer = csv.writer(fp, lineterminator="\n")
    writer.writerow(["x", "F"])
    for x, f in zip(e.points, e.steps):
        writer.writerow([f"{x:.6f}", f"{f:.6f}"])


def export_qq(samples: Sequence[float], fp) -> None:
    """Write normal Q-Q pairs as CSV rows ``theoretical,sample``."""
    pairs = qq_normal(samples)
    writer = csv.writer(fp, lineterminator="\n")
    writer.writerow(["theoretical", "sample"])
    for q, s in pairs:
        writer.writerow([f"{q:.6f}", f"{s:.6f}"])


def render_svg_lines(series: dict[str, np.ndarray], fp,
                     width: int = 640, height: int = 480) -> None:
    """Minimal SVG polyline rendering of (n, 2) data arrays.

    Intended for quick inspection of ECDF or Q-Q exports; styling is
    deliberately spartan (one grey frame, one polyline per series).
    """
    arrays = [np.asarray(a, dtype=float) for a in series.values()]
    if not arrays:
        raise DomainError("no series to render")
    allpts = np.vstack(arrays)
    x0, y0 = allpts.min(axis=0)
    x1, y1 = allpts.max(axis=0)
    xspan = (x1 - x0) or 1.0
    yspan = (y1 - y0) or 1.0
    pad = 20.0

    def sx(x):
        return pad + (x - x0) / xspan * (width - 2 * pad)

    def sy(y):
        return height - pad - (y - y0) / yspan * (height - 2 * pad)

    colors = ("black", "firebrick", "steelblue", "seagreen")
    fp.write(f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
             f'height="{height}">\n')
    fp.write(f'<rect x="{pad}" y="{pad}" width="{width - 2 * pad}" '
             f'height="{height - 2 * pad}" fill="none" stroke="grey"/>\n')
    for (name, arr), color in zip(series.items(), colors):
        arr = np.asarray(arr, dtype=float)
        pts = " ".join(f"{sx(x):.1f},{sy(y):.1f}" for x, y in arr)
        fp.write(f'<polyline fill="none" stroke="{color}" points="{pts}">'
                 f'<title>{name}</title></polyline>\n')
    fp.write("</svg>\n")
