"""Sampled futures feeding the stochastic programs.

A scenario couples, per hospital, a path of autonomous occupancy (current
residents surviving plus fresh autonomous admissions) with a path of
regional arrivals still needing assignment.  Sampling is driven by
per-scenario substreams derived from (seed, i), so sets are reproducible
and can be generated concurrently in any order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import poisson

from .forecasting import FractionEstimate
from .occupancy import LosDistribution, RateCurve, WardRoster


@dataclass(frozen=True)
class ScenarioSet:
    """I sampled paths over ``horizon`` days.

    ``occupancy[i, h, u]`` is the autonomous occupancy of hospital h at the
    day boundary u+1 days ahead; ``arrivals[i, u]`` the number of regional
    patients needing assignment during day u+1.
    """

    horizon: int
    occupancy: np.ndarray
    arrivals: np.ndarray
    seed: int

    def __post_init__(self):
        occ = np.ascontiguousarray(self.occupancy, dtype=np.int64)
        arr = np.ascontiguousarray(self.arrivals, dtype=np.int64)
        if occ.ndim != 3 or arr.ndim != 2:
            raise ValueError("occupancy must be (I, H, s), arrivals (I, s)")
        if occ.shape[0] != arr.shape[0] or occ.shape[2] != self.horizon or arr.shape[1] != self.horizon:
            raise ValueError("scenario array shapes are inconsistent")
        if occ.size and occ.min() < 0 or arr.size and arr.min() < 0:
            raise ValueError("scenario entries must be >= 0")
        occ.setflags(write=False)
        arr.setflags(write=False)
        object.__setattr__(self, "occupancy", occ)
        object.__setattr__(self, "arrivals", arr)

    @property
    def count(self) -> int:
        return self.occupancy.shape[0]

    @property
    def hospitals(self) -> int:
        return self.occupancy.shape[1]

    def occupancy_quantile(self, u: int, q: float) -> np.ndarray:
        """Nearest-rank q-quantile of occupancy at u days ahead, per hospital."""
        vals = np.sort(self.occupancy[:, :, u - 1], axis=0)
        rank = min(max(int(np.ceil(q * self.count)), 1), self.count)
        return vals[rank - 1, :]

    def occupancy_quantile_grid(self, q: float) -> np.ndarray:
        """Nearest-rank q-quantile per hospital and day, shape (H, s)."""
        vals = np.sort(self.occupancy, axis=0)
        rank = min(max(int(np.ceil(q * self.count)), 1), self.count)
        return vals[rank - 1, :, :]

    def to_json(self) -> dict:
        return {
            "horizon": self.horizon,
            "seed": self.seed,
            "occupancy": self.occupancy.tolist(),
            "arrivals": self.arrivals.tolist(),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "ScenarioSet":
        return cls(
            horizon=int(doc["horizon"]),
            occupancy=np.asarray(doc["occupancy"], dtype=np.int64),
            arrivals=np.asarray(doc["arrivals"], dtype=np.int64),
            seed=int(doc["seed"]),
        )


@dataclass(frozen=True)
class AssignCountPmf:
    """Truncated Poisson pmf of today's assignable arrival count.

    Truncation J is the 97.5% quantile; the tail mass is deliberately not
    redistributed (the overflow re-run covers it).
    """

    rate: float
    truncation: int
    probabilities: tuple[float, ...]

    def __post_init__(self):
        if self.rate < 0:
            raise ValueError("rate must be >= 0")
        if len(self.probabilities) != self.truncation + 1:
            raise ValueError("need exactly J+1 probabilities")
        if any(p < 0 for p in self.probabilities) or sum(self.probabilities) > 1.0 + 1e-9:
            raise ValueError("probabilities must be >= 0 and sum to at most 1")


def assign_count_pmf(rate: float) -> AssignCountPmf:
    """Poisson pmf of today's assignable arrivals, truncated at the 97.5% quantile."""
    if rate < 0:
        raise ValueError("rate must be >= 0")
    if rate == 0.0:
        return AssignCountPmf(rate=0.0, truncation=0, probabilities=(1.0,))
    j = int(poisson.ppf(0.975, rate))
    # ppf guarantees cdf(j) >= 0.975; back off if rounding overshot
    while j > 0 and poisson.cdf(j - 1, rate) >= 0.975:
        j -= 1
    probs = tuple(float(poisson.pmf(k, rate)) for k in range(j + 1))
    return AssignCountPmf(rate=float(rate), truncation=j, probabilities=probs)


def generate_scenarios(
    rosters: Sequence[WardRoster],
    fractions: FractionEstimate,
    rates: RateCurve,
    los: LosDistribution,
    s: int,
    count: int,
    seed: int,
) -> ScenarioSet:
    """Sample ``count`` scenario paths over the next ``s`` days.

    Per scenario: residents survive with their conditional residual-stay
    law; autonomous admissions arrive Poisson(f_hat_h * rate_u) at a uniform
    instant within their day with a fresh LoS; occupancy is counted at day
    boundaries.  Assignable arrivals are Poisson with the leftover share of
    the regional rate.
    """
    if s < 1 or count < 1:
        raise ValueError("horizon and scenario count must be >= 1")
    if len(rates) < s:
        raise ValueError("rate curve shorter than the horizon")
    f_hat = np.asarray(fractions.fractions, dtype=float)
    if len(f_hat) != len(rosters):
        raise ValueError("fraction estimate and rosters disagree on hospital count")
    daily = rates.as_array()[:s]
    assignable_rate = fractions.assignable_share * daily

    H = len(rosters)
    occupancy = np.zeros((count, H, s), dtype=np.int64)
    arrivals = np.zeros((count, s), dtype=np.int64)
    sigma = np.arange(1, s + 1, dtype=float)
    for i in range(count):
        rng = np.random.default_rng(np.random.SeedSequence((seed, i)))
        for h, roster in enumerate(rosters):
            if roster.occupancy:
                remaining = los.sample_remaining(np.asarray(roster.attained_los), rng)
                occupancy[i, h, :] += (remaining[:, None] > sigma[None, :]).sum(axis=0)
            lam = f_hat[h] * daily
            counts = rng.poisson(lam)
            for u in range(s):
                k = int(counts[u])
                if k == 0:
                    continue
                delta = rng.random(k)
                stays = los.sample(rng, k)
                # arrival at (u + delta); present at boundary m+1 iff stay
                # outlasts the remainder of its day plus whole days after
                for m in range(u, s):
                    occupancy[i, h, m] += int(np.sum(stays > (m - u) + 1.0 - delta))
        arrivals[i, :] = rng.poisson(assignable_rate)
    return ScenarioSet(horizon=s, occupancy=occupancy, arrivals=arrivals, seed=seed)


def collapse_scenarios(scen: ScenarioSet, statistic="median") -> ScenarioSet:
    """Reduce a set to a single deterministic scenario, cell by cell.

    ``statistic`` is "median" or a quantile level in (0, 1) applied with the
    nearest-rank rule; medians of even counts round half up.
    """
    if statistic == "median":
        occ = np.floor(np.median(scen.occupancy, axis=0) + 0.5)
        arr = np.floor(np.median(scen.arrivals, axis=0) + 0.5)
    else:
        q = float(statistic)
        if not 0.0 < q < 1.0:
            raise ValueError("quantile level must lie in (0, 1)")
        rank = min(max(int(np.ceil(q * scen.count)), 1), scen.count)
        occ = np.sort(scen.occupancy, axis=0)[rank - 1]
        arr = np.sort(scen.arrivals, axis=0)[rank - 1]
    return ScenarioSet(
        horizon=scen.horizon,
        occupancy=occ[None, :, :].astype(np.int64),
        arrivals=arr[None, :].astype(np.int64),
        seed=scen.seed,
    )
