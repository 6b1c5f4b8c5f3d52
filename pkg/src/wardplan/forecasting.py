"""Arrival-rate prediction and online estimation of autonomous fractions.

The regional arrival intensity is predicted by fitting a 5-parameter
Richards growth curve to cumulative daily arrivals and differencing the
fitted curve; an upper-90% variant widens each daily increment by the
delta-method standard error.  A simple EWMA provides the ground-truth rate
recovery used by the simulation study, and ``update_fractions`` keeps the
running estimate of each hospital's share of autonomous arrivals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import minimize

from .occupancy import RateCurve

Z_90 = 1.2815515655446004  # standard normal 90% quantile


def _richards(t, params):
    """y(t) = A + (K - A) * (1 + Q exp(-B t)) ** (-1/nu)."""
    a, k, b, q, nu = params
    expo = np.exp(np.clip(-b * t, -700.0, 700.0))
    base = np.maximum(1.0 + q * expo, 1e-12)
    return a + (k - a) * base ** (-1.0 / nu)


@dataclass(frozen=True)
class RichardsFit:
    """Least-squares Richards fit to a cumulative arrival series.

    ``params`` is (A, K, B, Q, nu); ``t0`` anchors model time 0 at the first
    observation of the fitted window so predictions use absolute days.
    ``covariance`` comes from the Gauss-Newton normal equations at the
    optimum and feeds the delta-method band of ``predict_rate``.
    """

    params: tuple[float, float, float, float, float]
    t0: int
    n_obs: int
    residual_variance: float
    covariance: np.ndarray
    degenerate: bool = False
    converged: bool = True

    def cumulative(self, days):
        """Fitted cumulative arrivals at absolute day(s) ``days``."""
        t = np.asarray(days, dtype=float) - self.t0
        return _richards(t, self.params)


def _fit_objective(params, t, y):
    a, k, b, q, nu = params
    if nu <= 1e-6 or b < 0.0 or q < 0.0 or k < a:
        return 1e18
    resid = _richards(t, (a, k, b, q, nu)) - y
    return float(resid @ resid)


def fit_richards(
    daily_arrivals,
    window: int | None = None,
    warm_start: tuple[float, ...] | None = None,
) -> RichardsFit:
    """Fit the growth curve to the trailing ``window`` days of arrivals.

    Deterministic: a fixed grid of starting points (optionally extended by
    ``warm_start``, e.g. yesterday's parameters in a rolling refit) is
    screened with short Nelder-Mead runs; the best is polished with a long
    run.  Ties resolve by grid order.
    """
    series = np.asarray(daily_arrivals, dtype=float)
    if window is not None:
        series = series[-window:]
    if len(series) < 10:
        raise ValueError("need at least 10 observations to fit")
    y = np.cumsum(series)
    t = np.arange(len(series), dtype=float)
    t0 = 0  # model time measured from the window start
    total = y[-1]
    if total <= 0.0:
        cov = np.zeros((5, 5))
        return RichardsFit(
            params=(0.0, 0.0, 0.1, 1.0, 1.0),
            t0=t0,
            n_obs=len(series),
            residual_variance=0.0,
            covariance=cov,
            degenerate=True,
        )

    span = float(len(series))
    starts = []
    if warm_start is not None:
        # rolling refit: the warm point plus a few anchors is enough
        starts.append(tuple(float(v) for v in warm_start))
        for k_mult, b0, nu0 in ((1.05, 0.15, 1.0), (1.5, 0.1, 1.0), (3.0, 0.05, 0.5)):
            starts.append((0.0, total * k_mult, b0, span / 4.0, nu0))
        screen_iter, polish_iter = 150, 800
    else:
        for k_mult in (1.05, 1.5, 3.0):
            for b0 in (0.05, 0.15, 0.4):
                for nu0 in (0.5, 1.0, 2.0):
                    starts.append((0.0, total * k_mult, b0, span / 4.0, nu0))
        screen_iter, polish_iter = 250, 3000
    screened = []
    for s0 in starts:
        res = minimize(
            _fit_objective,
            np.asarray(s0, dtype=float),
            args=(t, y),
            method="Nelder-Mead",
            options={"maxiter": screen_iter, "xatol": 1e-4, "fatol": 1e-6},
        )
        screened.append(res)
    best = min(screened, key=lambda r: r.fun)
    best = minimize(
        _fit_objective,
        best.x,
        args=(t, y),
        method="Nelder-Mead",
        options={"maxiter": polish_iter, "xatol": 1e-9, "fatol": 1e-12},
    )
    params = tuple(float(v) for v in best.x)
    dof = max(1, len(series) - 5)
    sigma2 = float(best.fun) / dof
    jac = _numeric_jacobian(t, params)
    jtj = jac.T @ jac
    try:
        cov = sigma2 * np.linalg.pinv(jtj)
    except np.linalg.LinAlgError:
        cov = np.zeros((5, 5))
    return RichardsFit(
        params=params,
        t0=t0,
        n_obs=len(series),
        residual_variance=sigma2,
        covariance=cov,
        degenerate=False,
        converged=bool(best.success),
    )


def _numeric_jacobian(t, params, rel_step=1e-6):
    base = _richards(t, params)
    jac = np.empty((len(t), 5))
    for i in range(5):
        p = list(params)
        h = rel_step * max(1.0, abs(p[i]))
        p[i] += h
        jac[:, i] = (_richards(t, p) - base) / h
    return jac


def predict_rate(fit: RichardsFit, start: int, horizon: int, mode: str = "point") -> RateCurve:
    """Daily arrival-rate forecast for days start..start+horizon-1.

    ``point`` returns the fitted curve's daily increments; ``upper90`` adds
    z90 times the delta-method standard error of each increment.  Rates are
    clipped at zero.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if mode not in ("point", "upper90"):
        raise ValueError(f"unknown mode {mode!r}")
    if fit.degenerate:
        return RateCurve(daily_rates=(0.0,) * horizon)
    days = np.arange(start, start + horizon + 1, dtype=float)
    cum = fit.cumulative(days)
    inc = np.diff(cum)
    if mode == "upper90":
        t_rel = days - fit.t0
        jac_hi = _numeric_jacobian(t_rel[1:], fit.params)
        jac_lo = _numeric_jacobian(t_rel[:-1], fit.params)
        g = jac_hi - jac_lo
        var = np.einsum("ij,jk,ik->i", g, fit.covariance, g)
        inc = inc + Z_90 * np.sqrt(np.maximum(var, 0.0))
    return RateCurve(daily_rates=tuple(np.maximum(inc, 0.0)))


def ewma_rate(daily_arrivals, weight: float) -> float:
    """Exponentially weighted moving average, r_t = (1-w) r_{t-1} + w a_t."""
    if not 0.0 < weight <= 1.0:
        raise ValueError("weight must lie in (0, 1]")
    series = np.asarray(daily_arrivals, dtype=float)
    if len(series) == 0:
        raise ValueError("series must be non-empty")
    r = series[0]
    for a in series[1:]:
        r = (1.0 - weight) * r + weight * a
    return float(r)


@dataclass(frozen=True)
class FractionEstimate:
    """Running estimate of each hospital's autonomous arrival share.

    f_hat_h = (prior_h + sum of autonomous arrivals at h)
              / (1 + sum over days of all regional arrivals).
    """

    priors: tuple[float, ...]
    autonomous_totals: tuple[float, ...]
    arrival_total: float

    def __post_init__(self):
        priors = np.asarray(self.priors, dtype=float)
        if np.any(priors < 0) or priors.sum() > 1.0 + 1e-12:
            raise ValueError("priors must be non-negative and sum to at most 1")
        if len(self.autonomous_totals) != len(self.priors):
            raise ValueError("autonomous totals must match priors in length")

    @classmethod
    def from_priors(cls, priors) -> "FractionEstimate":
        priors = tuple(float(p) for p in priors)
        return cls(priors=priors, autonomous_totals=(0.0,) * len(priors), arrival_total=0.0)

    @property
    def fractions(self) -> tuple[float, ...]:
        denom = 1.0 + self.arrival_total
        return tuple(
            (p + a) / denom for p, a in zip(self.priors, self.autonomous_totals)
        )

    @property
    def assignable_share(self) -> float:
        return max(0.0, 1.0 - sum(self.fractions))


def update_fractions(
    est: FractionEstimate, day_autonomous, day_assigned: int
) -> FractionEstimate:
    """Fold one day of observed arrivals into the share estimate."""
    auto = np.asarray(day_autonomous, dtype=float)
    if np.any(auto < 0) or day_assigned < 0:
        raise ValueError("arrival counts must be >= 0")
    if len(auto) != len(est.priors):
        raise ValueError("per-hospital counts must match the number of hospitals")
    return replace(
        est,
        autonomous_totals=tuple(
            a + d for a, d in zip(est.autonomous_totals, auto)
        ),
        arrival_total=est.arrival_total + float(auto.sum()) + float(day_assigned),
    )
