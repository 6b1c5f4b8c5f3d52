"""Transient infinite-server occupancy mathematics for infectious wards.

Each ward is modelled as an Mt/G/inf queue: admissions follow an
inhomogeneous Poisson process with a piecewise-constant daily rate and
lengths of stay (LoS) are iid draws from an estimated survival curve.
Starting empty, the occupancy at any time is Poisson distributed with mean
equal to the offered load; conditional on the attained stays of current
residents, the expected future occupancy is a residual-survival sum plus
the offered load of the forecast window.

All integrals are evaluated on a daily grid with right-continuous step
interpolation of the survival curve (rates are daily anyway), so the
rectangle quadrature is exact for day-boundary expectations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


class EstimationError(ValueError):
    """Raised when a survival curve cannot be estimated from the data."""


@dataclass(frozen=True)
class LosDistribution:
    """Length-of-stay distribution as a right-continuous survival step curve.

    ``survival[k]`` is P(LoS > knots[k]); between knots the curve is flat.
    Beyond the last knot the curve keeps stepping down once per day by the
    last observed per-day hazard, so the distribution is proper and has a
    finite mean even when fitted from right-censored records.  Keeping the
    tail piecewise-flat within days makes the daily rectangle quadrature
    exact for day-boundary occupancy expectations.
    """

    knots: tuple[float, ...]
    survival: tuple[float, ...]
    _tail_ratio: float = field(init=False, repr=False, default=0.0)

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=float)
        surv = np.asarray(self.survival, dtype=float)
        if knots.ndim != 1 or knots.shape != surv.shape or len(knots) == 0:
            raise ValueError("knots and survival must be equal-length 1-d sequences")
        if knots[0] != 0.0:
            raise ValueError("first knot must be 0")
        if np.any(np.diff(knots) < 0):
            raise ValueError("knots must be non-decreasing")
        if surv[0] != 1.0:
            raise ValueError("survival at 0 must be 1")
        if np.any(surv < 0.0) or np.any(surv > 1.0):
            raise ValueError("survival values must lie in [0, 1]")
        if np.any(np.diff(surv) > 0.0):
            raise ValueError("survival must be non-increasing")
        # collapse duplicate knots to their final (right-continuous) value
        keep = np.concatenate([knots[1:] != knots[:-1], [True]])
        knots, surv = knots[keep], surv[keep]
        object.__setattr__(self, "knots", tuple(knots))
        object.__setattr__(self, "survival", tuple(surv))
        object.__setattr__(self, "_tail_ratio", self._compute_tail_ratio(knots, surv))

    @staticmethod
    def _compute_tail_ratio(knots: np.ndarray, surv: np.ndarray) -> float:
        if surv[-1] == 0.0:
            return 0.0
        drops = np.nonzero(surv[1:] < surv[:-1])[0]
        if len(drops) == 0:
            raise ValueError("survival never decreases: distribution would be improper")
        k = drops[-1] + 1
        ratio = (surv[k] / surv[k - 1]) ** (1.0 / (knots[k] - knots[k - 1]))
        return float(ratio)

    def survival_at(self, age):
        """P(LoS > age) for scalar or array ``age`` >= 0."""
        a = np.asarray(age, dtype=float)
        if np.any(a < 0):
            raise ValueError("age must be non-negative")
        knots = np.asarray(self.knots)
        surv = np.asarray(self.survival)
        idx = np.searchsorted(knots, a, side="right") - 1
        head = surv[np.clip(idx, 0, len(surv) - 1)]
        last = knots[-1]
        if self._tail_ratio > 0.0:
            # tail steps once per whole day past the last knot
            tail = surv[-1] * self._tail_ratio ** np.floor(np.maximum(a - last, 0.0))
        else:
            tail = np.zeros_like(head)
        out = np.where(a > last, tail, head)
        return float(out) if np.isscalar(age) else out

    def mean(self) -> float:
        """Mean LoS as the daily Riemann sum of the survival curve."""
        last = self.knots[-1]
        head_days = int(math.ceil(last)) + 1
        head = float(np.sum(self.survival_at(np.arange(head_days))))
        if self.survival[-1] == 0.0:
            return head
        r = self._tail_ratio
        tail = float(self.survival_at(head_days)) / (1.0 - r)
        return head + tail

    def _inverse_survival(self, targets: np.ndarray) -> np.ndarray:
        """Smallest age a with S(a) < target, for targets in (0, 1]."""
        surv = np.asarray(self.survival)
        knots = np.asarray(self.knots)
        # count of survival entries >= target (prefix, by monotonicity)
        k = np.searchsorted(-surv, -targets, side="right")
        ages = np.empty_like(targets)
        in_head = k < len(surv)
        ages[in_head] = knots[k[in_head]]
        if np.any(~in_head):
            r = self._tail_ratio
            steps = np.log(targets[~in_head] / surv[-1]) / math.log(r)
            ages[~in_head] = knots[-1] + np.floor(steps) + 1.0
        return ages

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw iid LoS values by inverting the survival curve."""
        return self.from_uniform(rng.random(size))

    def from_uniform(self, u) -> np.ndarray:
        """Map uniforms to LoS draws (lets callers share random streams)."""
        # guard against u == 0, whose inverse lies at +inf in the tail
        u = np.maximum(np.asarray(u, dtype=float), 1e-300)
        return self._inverse_survival(u)

    def sample_remaining(self, attained, rng: np.random.Generator) -> np.ndarray:
        """Residual stay for residents with the given attained LoS values.

        P(R > sigma) = S(attained + sigma) / S(attained); a resident whose
        conditioning event has probability zero departs immediately.
        """
        ell = np.asarray(attained, dtype=float)
        s_ell = self.survival_at(ell) if ell.size else np.zeros(0)
        u = np.maximum(rng.random(ell.shape), 1e-300)
        remaining = np.zeros_like(ell)
        alive = s_ell > 0.0
        if np.any(alive):
            ages = self._inverse_survival(u[alive] * s_ell[alive])
            remaining[alive] = np.maximum(ages - ell[alive], 0.0)
        return remaining

    def to_json(self) -> dict:
        return {"knots": list(self.knots), "survival": list(self.survival)}

    @classmethod
    def from_json(cls, doc: dict) -> "LosDistribution":
        return cls(knots=tuple(doc["knots"]), survival=tuple(doc["survival"]))


@dataclass(frozen=True)
class WardRoster:
    """Attained LoS (days) of every patient currently residing in a ward."""

    attained_los: tuple[float, ...]

    def __post_init__(self):
        vals = np.asarray(self.attained_los, dtype=float)
        if np.any(vals < 0) or not np.all(np.isfinite(vals)):
            raise ValueError("attained LoS values must be finite and >= 0")
        object.__setattr__(self, "attained_los", tuple(float(v) for v in vals))

    @property
    def occupancy(self) -> int:
        return len(self.attained_los)


@dataclass(frozen=True)
class RateCurve:
    """Piecewise-constant arrival intensity: ``daily_rates[d]`` over day d."""

    daily_rates: tuple[float, ...]

    def __post_init__(self):
        rates = np.asarray(self.daily_rates, dtype=float)
        if rates.ndim != 1:
            raise ValueError("daily_rates must be 1-d")
        if np.any(rates < 0) or not np.all(np.isfinite(rates)):
            raise ValueError("daily rates must be finite and >= 0")
        object.__setattr__(self, "daily_rates", tuple(float(r) for r in rates))

    def __len__(self) -> int:
        return len(self.daily_rates)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.daily_rates)


def poisson_occupancy_pmf(rho: float, n: int) -> float:
    """P(N = n) for occupancy N of an initially empty infinite-server queue.

    Computed in log space via lgamma so large offered loads or counts do
    not overflow the factorial.
    """
    if rho < 0 or not math.isfinite(rho):
        raise ValueError("offered load must be finite and >= 0")
    if n < 0 or int(n) != n:
        raise ValueError("count must be a non-negative integer")
    n = int(n)
    if rho == 0.0:
        return 1.0 if n == 0 else 0.0
    return math.exp(n * math.log(rho) - rho - math.lgamma(n + 1))


def offered_load(rates: RateCurve, los: LosDistribution, tau: int) -> float:
    """Expected occupancy at day ``tau`` of a system that started empty.

    Daily rectangle quadrature of the convolution of the arrival rate with
    the LoS survival curve.
    """
    if tau < 0 or int(tau) != tau:
        raise ValueError("tau must be a non-negative integer day")
    tau = int(tau)
    if tau > len(rates):
        raise ValueError("tau lies beyond the rate curve's domain")
    if tau == 0:
        return 0.0
    ages = np.arange(tau)
    return float(np.dot(rates.as_array()[:tau][::-1], los.survival_at(ages)))


def conditional_expected_occupancy(
    ward: WardRoster,
    rates: RateCurve,
    los: LosDistribution,
    tau: int,
    sigma: int,
) -> float:
    """Expected occupancy ``sigma`` days ahead given the residents' attained LoS.

    Residents contribute their residual survival probabilities; arrivals in
    the window contribute the offered load of the window, with rates indexed
    on the same calendar as ``offered_load``.  A resident whose attained LoS
    has zero survival mass counts as departed.
    """
    if sigma < 0 or int(sigma) != sigma:
        raise ValueError("sigma must be a non-negative integer")
    sigma, tau = int(sigma), int(tau)
    if tau < 0 or tau + sigma > len(rates):
        raise ValueError("forecast window lies beyond the rate curve's domain")
    stay_term = 0.0
    if ward.occupancy:
        ell = np.asarray(ward.attained_los)
        s_now = los.survival_at(ell)
        s_later = los.survival_at(ell + sigma)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(s_now > 0.0, s_later / np.where(s_now > 0, s_now, 1.0), 0.0)
        stay_term = float(np.sum(ratio))
    if sigma == 0:
        return stay_term
    ages = np.arange(sigma)
    window = rates.as_array()[tau : tau + sigma]
    return stay_term + float(np.dot(window[::-1], los.survival_at(ages)))


def kaplan_meier(records: Iterable[tuple[float, bool]]) -> LosDistribution:
    """Product-limit survival estimate from possibly right-censored stays.

    ``records`` holds (duration_days, censored) pairs.  Censored records
    leave the risk set without an event.  The resulting curve keeps a knot
    at the largest censoring time so the geometric tail only starts after
    the last observation.
    """
    recs = [(float(d), bool(c)) for d, c in records]
    if not recs:
        raise EstimationError("no records")
    if any(d <= 0 for d, _ in recs):
        raise ValueError("durations must be > 0")
    if all(c for _, c in recs):
        raise EstimationError("all records censored: no events to estimate from")
    durations = np.array([d for d, _ in recs])
    events = np.array([not c for _, c in recs])
    order = np.argsort(durations, kind="stable")
    durations, events = durations[order], events[order]

    knots = [0.0]
    surv = [1.0]
    s = 1.0
    at_risk = len(durations)
    i = 0
    while i < len(durations):
        t = durations[i]
        j = i
        d = 0
        while j < len(durations) and durations[j] == t:
            d += int(events[j])
            j += 1
        if d > 0:
            s *= 1.0 - d / at_risk
            knots.append(t)
            surv.append(s)
        at_risk -= j - i
        i = j
    last_obs = float(durations[-1])
    if last_obs > knots[-1]:
        knots.append(last_obs)
        surv.append(s)
    return LosDistribution(knots=tuple(knots), survival=tuple(surv))
