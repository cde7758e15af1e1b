"""Parameter estimation for fractional Poisson count data.

Method-of-moments fits (single observation and a closed-form
two-threshold variant), maximum likelihood with a Monte Carlo likelihood
fallback for regimes where the pmf series is unreliable, the observed
information matrix, and the replicated estimator-study harness.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from .errors import DomainError
from .process import (
    CountObservation,
    FppParams,
    PoissonParams,
    DEFAULT_SERIES_TERMS,
    _pmf_values,
    fpp_mean,
    fpp_variance,
    simulate_counts,
    variance_coefficient,
)
from .rng import RngStream
from .special import log_gamma

_RATE_FLOOR = 1e-12
_ORDER_CEILING = 1.0 - 1e-9


# --------------------------------------------------------------------------
# Configuration and report types
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SolverConfig:
    """Settings for the derivative-free (Nelder-Mead) searches.

    The searches run in transformed coordinates: rate = exp(a) keeps the
    rate positive, and order = 1 / (1 + exp(-b)) keeps the fractional
    order inside (0, 1).  order == 1 exactly is reachable only through
    the ``fix_order`` argument of the fitting functions.
    """

    max_iters: int = 600
    tolerance: float = 1e-12
    multistart: tuple[tuple[float, float], ...] | None = None
    transform: str = "log-rate/logistic-order"

    def __post_init__(self):
        if self.tolerance <= 0.0:
            raise DomainError("tolerance must be > 0")
        if self.max_iters < 1:
            raise DomainError("max_iters must be >= 1")
        if self.transform != "log-rate/logistic-order":
            raise DomainError(f"unsupported transform {self.transform!r}")


@dataclass
class EstimateReport:
    """A fitted parameter point with diagnostics.

    ``order`` is None for pure Poisson fits.  ``covariance``, when
    present, is the symmetric 2x2 asymptotic covariance in (rate, order)
    coordinates.
    """

    method: str
    rate: float
    order: float | None
    objective: float
    converged: bool
    covariance: np.ndarray | None = None
    notes: dict = field(default_factory=dict)

    @property
    def params(self) -> FppParams | PoissonParams:
        if self.order is None:
            return PoissonParams(rate=self.rate)
        return FppParams(rate=self.rate, order=self.order)


@dataclass
class StudyReport:
    """Replicated-estimation summary: per-replicate estimates, bias, MSE."""

    method: str
    true_params: FppParams | PoissonParams
    threshold: float
    paths: int
    replicates: int
    estimates: dict[str, np.ndarray]
    mean: dict[str, float]
    bias: dict[str, float]
    mse: dict[str, float]
    excluded: int


# --------------------------------------------------------------------------
# Transforms
# --------------------------------------------------------------------------


def _to_internal(rate: float, order: float) -> np.ndarray:
    order = min(max(order, 1e-9), _ORDER_CEILING)
    return np.array([math.log(rate), math.log(order / (1.0 - order))])


def _from_internal(vec) -> tuple[float, float]:
    a, b = float(vec[0]), float(vec[1])
    rate = math.exp(a)
    order = 1.0 / (1.0 + math.exp(-b))
    return max(rate, _RATE_FLOOR), min(max(order, 1e-12), _ORDER_CEILING)


# --------------------------------------------------------------------------
# Closed-form fits
# --------------------------------------------------------------------------


def fit_pp(obs: CountObservation) -> EstimateReport:
    """Poisson rate estimate count / threshold."""
    rate = obs.count / obs.threshold
    return EstimateReport(method="pp-rate", rate=rate, order=None,
                          objective=0.0, converged=True)


def fit_mom_two_threshold(n1: int, n2: int, t1: float, t2: float) -> EstimateReport:
    """Closed-form moment fit from counts at two thresholds.

    Uses only the mean-growth law m(t) = q * t^order, so unlike the
    single-observation moment system it genuinely identifies order < 1:
    order = ln(n1/n2) / ln(t1/t2), clamped into (0, 1].
    """
    if not (0.0 < t1 < t2):
        raise DomainError("thresholds must satisfy 0 < t1 < t2")
    if n1 < 1 or n2 < 1 or n1 > n2:
        raise DomainError("counts must satisfy 1 <= n1 <= n2")
    if n1 == n2:
        raise DomainError("equal counts imply order -> 0, outside (0, 1]")
    order = math.log(n1 / n2) / math.log(t1 / t2)
    clamped = order > 1.0
    order = min(order, 1.0)
    rate = n1 * math.exp(log_gamma(1.0 + order)) / t1 ** order
    notes = {"clamped_to_unit_order": True} if clamped else {}
    return EstimateReport(method="mom-two-threshold", rate=rate, order=order,
                          objective=0.0, converged=True, notes=notes)


# --------------------------------------------------------------------------
# Single-observation method of moments
# --------------------------------------------------------------------------


def _moment_residuals(rate: float, order: float, n: int, t: float) -> float:
    params = FppParams(rate=rate, order=order)
    mean = fpp_mean(params, t)
    m2 = fpp_variance(params, t, "beta-coefficient") + mean * mean
    r1 = (mean - n) / n
    r2 = (m2 - n * n) / (n * n)
    return r1 * r1 + r2 * r2


def fit_mom_single(obs: CountObservation, cfg: SolverConfig | None = None,
                   fix_order: float | None = None) -> EstimateReport:
    """Moment fit from a single count observation.

    Minimizes the normalized residuals of the two moment-matching
    equations.  This system is analytically degenerate: the implied
    sample variance of a single observation is zero, so the exact
    minimizer sits at order = 1 for any data, and interior estimates are
    artifacts of the search's start and stopping rule.  The report's
    notes always carry a degeneracy diagnostic; use the two-threshold
    variant when a statistically meaningful order < 1 is needed.

    With ``fix_order`` the first moment equation is solved in closed
    form: rate = n * Gamma(1 + order) / t^order.
    """
    if obs.count < 1:
        raise DomainError("fit_mom_single requires count >= 1")
    cfg = cfg or SolverConfig()
    n, t = obs.count, obs.threshold

    if fix_order is not None:
        if not (0.0 < fix_order <= 1.0):
            raise DomainError("fix_order must lie in (0, 1]")
        rate = n * math.exp(log_gamma(1.0 + fix_order)) / t ** fix_order
        report = EstimateReport(method="mom-single", rate=rate, order=fix_order,
                                objective=_moment_residuals(rate, fix_order, n, t),
                                converged=True)
        _attach_degeneracy_note(report, n)
        return report

    def objective(vec) -> float:
        rate, order = _from_internal(vec)
        return _moment_residuals(rate, order, n, t)

    starts = cfg.multistart or _default_mom_starts(n, t)
    best, any_success = _multistart_nelder_mead(objective, starts, cfg)
    rate, order = _from_internal(best.x)
    report = EstimateReport(method="mom-single", rate=rate, order=order,
                            objective=float(best.fun), converged=any_success)
    _attach_degeneracy_note(report, n)
    return report


def _default_mom_starts(n: int, t: float) -> tuple[tuple[float, float], ...]:
    # Starts on the first-moment manifold rate(order) = n Gamma(1+order)/t^order.
    orders = (0.3, 0.5, 0.8, 0.95)
    return tuple(
        (n * math.exp(log_gamma(1.0 + b)) / t ** b, b) for b in orders
    )


def _attach_degeneracy_note(report: EstimateReport, n: int) -> None:
    c = variance_coefficient(report.order)
    report.notes.update({
        "degenerate_moment_system": True,
        "coefficient_at_estimate": c,
        "coefficient_target": 1.0 - 1.0 / n,
        "detail": ("single-observation moment system implies zero sample "
                   "variance; exact minimizer sits at order = 1, interior "
                   "estimates depend on the search start/termination"),
    })


# Objective value standing in for -inf log-likelihoods; keeps the simplex
# arithmetic finite so Nelder-Mead contracts away instead of warning.
_INFEASIBLE = 1e18


def _multistart_nelder_mead(objective, starts, cfg: SolverConfig):
    best = None
    for rate0, order0 in starts:
        res = minimize(
            objective,
            _to_internal(rate0, order0),
            method="Nelder-Mead",
            options={
                "maxiter": cfg.max_iters,
                "fatol": cfg.tolerance,
                "xatol": 1e-6,
            },
        )
        if best is None or res.fun < best.fun:
            best = res
    return best, bool(best.success) and best.fun < _INFEASIBLE


# --------------------------------------------------------------------------
# Likelihood
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class McLikelihood:
    """Monte Carlo fallback settings for unreliable pmf regimes.

    The stream is fixed per fit/replicate, so every likelihood
    evaluation reuses the same underlying uniforms (common random
    numbers) and the whole pipeline stays deterministic.
    """

    stream: RngStream
    sims: int = 10_000


def _common_threshold(counts: Sequence[CountObservation]) -> float:
    if not counts:
        raise DomainError("at least one observation is required")
    t = counts[0].threshold
    if any(obs.threshold != t for obs in counts):
        raise DomainError("all observations must share a common threshold")
    return t


def log_likelihood(params: FppParams, counts: Sequence[CountObservation],
                   k_max: int = DEFAULT_SERIES_TERMS,
                   mc: McLikelihood | None = None) -> float:
    """Sum of log pmf values over count observations at a common threshold.

    Unreliable series values are replaced by Monte Carlo estimates from
    one shared simulation batch when ``mc`` is given; any nonpositive
    probability yields ``-inf`` so optimizers treat the point as
    infeasible.
    """
    value, _ = log_likelihood_detail(params, counts, k_max=k_max, mc=mc)
    return value


def log_likelihood_detail(params: FppParams, counts: Sequence[CountObservation],
                          k_max: int = DEFAULT_SERIES_TERMS,
                          mc: McLikelihood | None = None) -> tuple[float, bool]:
    """``log_likelihood`` plus a flag marking Monte Carlo approximation."""
    t = _common_threshold(counts)
    tally = Counter(obs.count for obs in counts)
    return _loglik_from_tally(params, tally, t, k_max, mc)


def _loglik_from_tally(params: FppParams, tally: Counter, t: float,
                       k_max: int, mc: McLikelihood | None) -> tuple[float, bool]:
    ns = np.array(sorted(tally), dtype=np.int64)
    values, reliable = _pmf_values(params, ns, t, k_max=k_max)

    approximate = False
    if not reliable.all():
        if mc is None:
            return -math.inf, True
        # Do not burn simulation effort on absurd proposals: a model whose
        # mean count dwarfs every observation has effectively zero
        # likelihood, which -inf represents faithfully.
        if fpp_mean(params, t) > 100.0 * (float(ns.max()) + 10.0):
            return -math.inf, True
        approximate = True
        sim = simulate_counts(params, t, mc.sims, mc.stream)
        freq = np.bincount(sim, minlength=int(ns.max()) + 1)
        bad = ~reliable
        values[bad] = freq[ns[bad]] / mc.sims

    total = 0.0
    for n, p in zip(ns, values):
        if not (p > 0.0):
            return -math.inf, approximate
        total += tally[int(n)] * math.log(p)
    return total, approximate


def fit_mle(counts: Sequence[CountObservation],
            k_max: int = DEFAULT_SERIES_TERMS,
            cfg: SolverConfig | None = None,
            mc: McLikelihood | None = None,
            fix_order: float | None = None,
            compute_covariance: bool = False) -> EstimateReport:
    """Maximum likelihood fit by derivative-free search.

    Default multistart: the Poisson rate estimate combined with orders
    {0.5, 0.8, 1.0}; the order-1 start is mapped just inside the open
    unit interval of the logistic transform.
    """
    cfg = cfg or SolverConfig()
    t = _common_threshold(counts)
    tally = Counter(obs.count for obs in counts)
    mean_count = sum(obs.count for obs in counts) / len(counts)
    rate0 = max(mean_count / t, 1e-3)
    used_mc = False

    def negloglik(rate: float, order: float) -> float:
        nonlocal used_mc
        value, approx = _loglik_from_tally(
            FppParams(rate=rate, order=order), tally, t, k_max, mc)
        used_mc = used_mc or approx
        return -value if math.isfinite(value) else _INFEASIBLE

    if fix_order is not None:
        if not (0.0 < fix_order <= 1.0):
            raise DomainError("fix_order must lie in (0, 1]")

        def objective_1d(vec) -> float:
            return negloglik(max(math.exp(float(vec[0])), _RATE_FLOOR), fix_order)

        best = None
        for a0 in (math.log(rate0), math.log(rate0) - 0.7, math.log(rate0) + 0.7):
            res = minimize(objective_1d, np.array([a0]), method="Nelder-Mead",
                           options={"maxiter": cfg.max_iters,
                                    "fatol": cfg.tolerance, "xatol": 1e-10})
            if best is None or res.fun < best.fun:
                best = res
        any_success = bool(best.success) and best.fun < _INFEASIBLE
        rate = max(math.exp(float(best.x[0])), _RATE_FLOOR)
        order = fix_order
        objective_value = -float(best.fun)
    else:
        def objective(vec) -> float:
            return negloglik(*_from_internal(vec))

        starts = cfg.multistart or tuple((rate0, b) for b in (0.5, 0.8, 1.0))
        best, any_success = _multistart_nelder_mead(objective, starts, cfg)
        rate, order = _from_internal(best.x)
        objective_value = -float(best.fun)

    notes: dict = {}
    if used_mc:
        notes["mc_likelihood"] = True
    converged = bool(any_success) and math.isfinite(objective_value)
    if rate <= 1e-8:
        converged = False
        notes["boundary"] = "rate driven to the lower boundary"

    report = EstimateReport(method="mle", rate=rate, order=order,
                            objective=objective_value, converged=converged,
                            notes=notes)
    if compute_covariance and converged and fix_order is None:
        info = observed_information(report.params, counts, k_max=k_max, mc=mc)
        report.covariance = info.covariance
        if info.covariance is None:
            report.notes["information_not_pd"] = True
    return report


# --------------------------------------------------------------------------
# Observed information
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class InformationResult:
    """Observed information (negative log-likelihood Hessian) and inverse."""

    matrix: np.ndarray
    covariance: np.ndarray | None
    positive_definite: bool


def observed_information(params: FppParams, counts: Sequence[CountObservation],
                         k_max: int = DEFAULT_SERIES_TERMS,
                         mc: McLikelihood | None = None) -> InformationResult:
    """Negative Hessian of the log-likelihood by central differences.

    Step sizes are max(1e-4, 1e-4 * |coordinate|).  When the order
    coordinate sits too close to 1 for a centered stencil, backward
    stencils of the same order of accuracy are used so the evaluations
    never leave the parameter domain.
    """
    rate, order = params.rate, params.order
    h_r = max(1e-4, 1e-4 * abs(rate))
    h_b = max(1e-4, 1e-4 * abs(order))

    def ll(r: float, b: float) -> float:
        return log_likelihood(FppParams(rate=r, order=b), counts,
                              k_max=k_max, mc=mc)

    f0 = ll(rate, order)
    d2_rate = (ll(rate + h_r, order) - 2.0 * f0 + ll(rate - h_r, order)) / h_r ** 2

    shifted = order + h_b > 1.0
    if not shifted:
        d2_order = (ll(rate, order + h_b) - 2.0 * f0 + ll(rate, order - h_b)) / h_b ** 2
        cross = (ll(rate + h_r, order + h_b) - ll(rate + h_r, order - h_b)
                 - ll(rate - h_r, order + h_b) + ll(rate - h_r, order - h_b)
                 ) / (4.0 * h_r * h_b)
    else:
        # Backward second difference at the order ceiling.
        d2_order = (ll(rate, order) - 2.0 * ll(rate, order - h_b)
                    + ll(rate, order - 2.0 * h_b)) / h_b ** 2

        def d_order(r: float) -> float:
            return (3.0 * ll(r, order) - 4.0 * ll(r, order - h_b)
                    + ll(r, order - 2.0 * h_b)) / (2.0 * h_b)

        cross = (d_order(rate + h_r) - d_order(rate - h_r)) / (2.0 * h_r)

    info = np.array([[-d2_rate, -cross], [-cross, -d2_order]])
    pd = bool(np.all(np.isfinite(info)) and info[0, 0] > 0.0
              and np.linalg.det(info) > 0.0)
    covariance = np.linalg.inv(info) if pd else None
    return InformationResult(matrix=info, covariance=covariance,
                             positive_definite=pd)


# --------------------------------------------------------------------------
# Error metrics and estimator studies
# --------------------------------------------------------------------------


def error_metrics(estimates: Sequence[float], truth: Sequence[float]) -> dict:
    """Bias, mean squared error, and mean absolute deviation."""
    x = np.asarray(estimates, dtype=float)
    y = np.asarray(truth, dtype=float)
    if x.size != y.size or x.size < 1:
        raise DomainError("inputs must be equal-length and nonempty")
    diff = x - y
    return {
        "bias": float(diff.mean()),
        "mse": float((diff * diff).mean()),
        "mad": float(np.abs(diff).mean()),
    }


def estimator_study(true_params: FppParams | PoissonParams, t: float,
                    paths: int, replicates: int, method: str, rng: RngStream,
                    sample_size: int = 50,
                    cfg: SolverConfig | None = None,
                    k_max: int = DEFAULT_SERIES_TERMS,
                    sims: int = 10_000) -> StudyReport:
    """Monte Carlo study of an estimator's bias and MSE.

    A pool of ``paths`` independent sample paths is counted at the
    threshold.  ``mom-single`` and ``pp-rate`` fit one pooled path per
    replicate; ``mom-two-threshold`` also counts each path at t/2;
    ``mle`` draws ``sample_size`` paths from the pool per replicate and
    maximizes the joint likelihood (Monte Carlo fallback past the
    series-reliable regime).

    Replicates that do not converge (or whose data is outside an
    estimator's domain, such as zero counts) are excluded from the
    summary and counted in ``excluded``.
    """
    if paths < 1 or replicates < 1:
        raise DomainError("paths and replicates must be >= 1")
    if method not in ("mom-single", "mom-two-threshold", "mle", "pp-rate"):
        raise DomainError(f"unknown study method {method!r}")

    is_fpp = isinstance(true_params, FppParams)
    if method != "pp-rate" and not is_fpp:
        raise DomainError(f"method {method!r} requires FppParams truth")

    if method == "mom-two-threshold":
        pool = _counts_at_thresholds(true_params, (t / 2.0, t), paths,
                                     rng.substream(0))
    else:
        pool = simulate_counts(true_params, t, paths, rng.substream(0))

    picker = rng.substream(1).generator()
    reports: list[EstimateReport | None] = []
    for r in range(replicates):
        if method == "mle":
            idx = picker.choice(paths, size=min(sample_size, paths), replace=False)
            obs = [CountObservation(int(c), t) for c in pool[idx]]
            mc = McLikelihood(stream=rng.substream(2, r), sims=sims)
            reports.append(fit_mle(obs, k_max=k_max, cfg=cfg, mc=mc))
        else:
            j = r if replicates <= paths else int(picker.integers(paths))
            if method == "pp-rate":
                reports.append(fit_pp(CountObservation(int(pool[j]), t)))
            elif method == "mom-single":
                c = int(pool[j])
                reports.append(
                    fit_mom_single(CountObservation(c, t), cfg=cfg)
                    if c >= 1 else None)
            else:
                n1, n2 = int(pool[j, 0]), int(pool[j, 1])
                try:
                    reports.append(fit_mom_two_threshold(n1, n2, t / 2.0, t))
                except DomainError:
                    reports.append(None)

    kept = [rep for rep in reports if rep is not None and rep.converged]
    excluded = replicates - len(kept)
    names = ("rate",) if method == "pp-rate" else ("rate", "order")
    truth = {"rate": true_params.rate}
    if is_fpp:
        truth["order"] = true_params.order

    estimates = {name: np.array([getattr(rep, name) for rep in kept])
                 for name in names}
    mean = {k: float(v.mean()) if v.size else math.nan
            for k, v in estimates.items()}
    bias = {k: float((v - truth[k]).mean()) if v.size else math.nan
            for k, v in estimates.items()}
    mse = {k: float(((v - truth[k]) ** 2).mean()) if v.size else math.nan
           for k, v in estimates.items()}
    return StudyReport(method=method, true_params=true_params, threshold=t,
                       paths=paths, replicates=replicates, estimates=estimates,
                       mean=mean, bias=bias, mse=mse, excluded=excluded)


def _counts_at_thresholds(params, ts, n_paths: int, rng: RngStream) -> np.ndarray:
    """Counts of each path at several thresholds; shape (n_paths, len(ts))."""
    from .process import _interarrival_batch, _CHUNK

    ts = np.asarray(ts, dtype=float)
    t_max = float(ts.max())
    gen = rng.generator()
    counts = np.zeros((n_paths, ts.size), dtype=np.int64)
    elapsed = np.zeros(n_paths)
    active = np.arange(n_paths)
    while active.size:
        draws = _interarrival_batch(params, gen, (active.size, _CHUNK))
        times = np.cumsum(draws, axis=1) + elapsed[active, None]
        counts[active] += (times[:, :, None] <= ts).sum(axis=1)
        elapsed[active] = times[:, -1]
        active = active[times[:, -1] <= t_max]
    return counts


# --------------------------------------------------------------------------
# Report emission
# --------------------------------------------------------------------------


def study_to_dict(report: StudyReport) -> dict:
    """JSON-ready study summary (includes per-replicate estimates)."""
    truth = {"rate": report.true_params.rate}
    if isinstance(report.true_params, FppParams):
        truth["order"] = report.true_params.order
    return {
        "method": report.method,
        "true_params": truth,
        "t": report.threshold,
        "paths": report.paths,
        "replicates": report.replicates,
        "mean": report.mean,
        "bias": report.bias,
        "mse": report.mse,
        "excluded_count": report.excluded,
        "estimates": {k: [float(x) for x in v]
                      for k, v in report.estimates.items()},
    }


def study_table(report: StudyReport) -> str:
    """Aligned-text summary mirroring the usual estimate/bias/MSE layout."""
    lines = [f"{'Estimate':<10}{'Mean':>12}{'Bias':>12}{'MSE':>12}"]
    for name in report.estimates:
        lines.append(f"{name:<10}{report.mean[name]:>12.4f}"
                     f"{report.bias[name]:>12.4f}{report.mse[name]:>12.4f}")
    lines.append(f"replicates kept: {report.replicates - report.excluded}"
                 f" / {report.replicates}")
    return "\n".join(lines)


def estimate_to_dict(report: EstimateReport) -> dict:
    """JSON-ready fit report."""
    out = {
        "method": report.method,
        "rate": report.rate,
        "order": report.order,
        "objective": report.objective,
        "converged": report.converged,
        "notes": report.notes,
    }
    if report.covariance is not None:
        out["covariance"] = [[float(x) for x in row] for row in report.covariance]
    return out


def estimate_table(report: EstimateReport) -> str:
    rows = [("method", report.method), ("rate", f"{report.rate:.6g}")]
    if report.order is not None:
        rows.append(("order", f"{report.order:.6g}"))
    rows.append(("objective", f"{report.objective:.6g}"))
    rows.append(("converged", str(report.converged)))
    width = max(len(k) for k, _ in rows)
    return "\n".join(f"{k:<{width}}  {v}" for k, v in rows)


def _json_dumps(payload: dict) -> str:
    return json.dumps(payload, indent=2, sort_keys=True)
