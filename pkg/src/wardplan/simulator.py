"""Daily-step Monte-Carlo study of the capacity-allocation decision rules.

Each simulated day: the active rule sees the morning state (rosters, room
ledger, scenario set) and commits a room plan and an assignment plan; the
day's arrivals then realize from the ground-truth streams, get routed, and
stay until their sampled length of stay elapses; the next morning's census
scores the decision (overbeds against the capacity committed the day
before, and so on).

Ground-truth randomness is organised so that compared rules consume
identical streams (common random numbers): the regional arrival counts,
per-arrival routing/instant/stay uniforms, and scenario seeds depend only
on (seed, replication, day), never on the rule.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .forecasting import FractionEstimate, fit_richards, predict_rate, update_fractions
from .milp import (
    CostWeights,
    HospitalRooms,
    RoomLedger,
    WEIGHT_PRESETS,
)
from .occupancy import LosDistribution, RateCurve, WardRoster
from .policies import (
    DailyDecision,
    DecisionContext,
    assignment_overflow,
    ih_decide,
    pu_decide,
    sp_decide,
)
from .scenarios import assign_count_pmf, collapse_scenarios, generate_scenarios

KPI_NAMES = ("overbeds", "underbeds", "reg_beds_used", "beds_reserved", "rooms_added_removed")
COST_NAMES = ("avg_cost_SP-O", "avg_cost_SP-B", "avg_cost_SP-R")
FORECAST_NAMES = ("forecast_cost_h1", "forecast_cost_h2", "forecast_cost_h3")
REGION = "REGION"

DEFAULT_LOS = LosDistribution(knots=(0.0, 1.0), survival=(1.0, 6.0 / 7.0))  # mean 7 days


def synthetic_two_wave_curve(
    days: int,
    base: float = 2.0,
    first_peak: float = 6.0,
    first_center: float = 45.0,
    first_width: float = 16.0,
    second_peak: float = 11.5,
    second_center: float = 105.0,
    second_width: float = 18.0,
) -> RateCurve:
    """Two overlapping Gaussian waves; regional mean arrivals span ~2-13/day.

    Calibrated so peak mean occupancy (~95 beds with a 7-day mean stay)
    strains the bundled case study's 100-bed total capacity.
    """
    d = np.arange(days, dtype=float)
    lam = (
        base
        + first_peak * np.exp(-(((d - first_center) / first_width) ** 2))
        + second_peak * np.exp(-(((d - second_center) / second_width) ** 2))
    )
    return RateCurve(daily_rates=tuple(lam))


@dataclass(frozen=True)
class RuleConfig:
    """Which decision rule runs, with its parameters."""

    kind: str  # SP | SP_DET | IH | PU
    weights: CostWeights | None = None
    statistic: object = "median"  # SP_DET collapse: "median" or quantile level
    quantile: float = 0.90
    margins: tuple[float, ...] = (3.0, 2.0, 2.0)
    designated: int = 0
    split: tuple[float, ...] = (0.61, 0.39)
    rate_mode: str = "point"  # point | upper90 arrival-rate predictor
    rel_gap: float = 1e-4
    name: str | None = None  # explicit label for reports

    def __post_init__(self):
        if self.kind not in ("SP", "SP_DET", "IH", "PU"):
            raise ValueError(f"unknown rule kind {self.kind!r}")
        if self.kind in ("SP", "SP_DET") and self.weights is None:
            raise ValueError("SP rules need cost weights")

    def label(self) -> str:
        if self.name:
            return self.name
        if self.kind in ("SP", "SP_DET"):
            for name, preset in WEIGHT_PRESETS.items():
                if preset == self.weights:
                    return f"{self.kind}:{name}"
        return self.kind


@dataclass(frozen=True)
class SimConfig:
    """Full study setup for one rule."""

    hospital_ids: tuple[str, ...]
    standard_capacity: tuple[int, ...]
    room_beds: tuple[tuple[int, ...], ...]
    true_fractions: tuple[float, ...]
    prior_fractions: tuple[float, ...]
    rule: RuleConfig
    los: LosDistribution = DEFAULT_LOS
    rate_curve: RateCurve | None = None  # ground truth over warmup+study days
    warmup_days: int = 60
    study_days: int = 91
    replications: int = 250
    scenarios_per_day: int = 100
    lookahead: int = 5
    seed: int = 20211001
    fit_window: int = 35  # trailing days feeding the daily arrival-rate refit

    def __post_init__(self):
        H = len(self.hospital_ids)
        if not (len(self.standard_capacity) == len(self.room_beds) == H):
            raise ValueError("hospital arrays disagree in length")
        if not (len(self.true_fractions) == len(self.prior_fractions) == H):
            raise ValueError("fraction arrays disagree in length")
        if sum(self.true_fractions) > 1.0 + 1e-9:
            raise ValueError("true fractions must sum to at most 1")
        if any(c <= 0 for c in self.standard_capacity):
            raise ValueError("capacities must be positive")
        if self.lookahead < 3:
            raise ValueError("lookahead must be at least 3 days")

    @property
    def n_hospitals(self) -> int:
        return len(self.hospital_ids)

    def ground_curve(self) -> RateCurve:
        if self.rate_curve is not None:
            return self.rate_curve
        return synthetic_two_wave_curve(self.warmup_days + self.study_days)


class RegionState:
    """Mutable per-replication world state (simulator internal)."""

    def __init__(self, config: SimConfig):
        self.day = 0
        # per hospital: array of (arrival_instant, departure_instant)
        self.arrivals: list[list[float]] = [[] for _ in range(config.n_hospitals)]
        self.departures: list[list[float]] = [[] for _ in range(config.n_hospitals)]
        self.ledger = RoomLedger.fresh(config.standard_capacity, config.room_beds)
        self.fractions = FractionEstimate.from_priors(config.prior_fractions)
        self.history: list[int] = []  # regional daily arrival totals
        self.last_fit_params = None

    def occupancy(self) -> tuple[int, ...]:
        return tuple(len(a) for a in self.arrivals)

    def rosters(self, now: float) -> tuple[WardRoster, ...]:
        return tuple(
            WardRoster(attained_los=tuple(max(now - t0, 0.0) for t0 in arr))
            for arr in self.arrivals
        )

    def admit(self, hospital: int, instant: float, departure: float) -> None:
        self.arrivals[hospital].append(instant)
        self.departures[hospital].append(departure)

    def discharge_until(self, now: float) -> list[int]:
        out = []
        for h in range(len(self.arrivals)):
            keep_a, keep_d = [], []
            gone = 0
            for a, d in zip(self.arrivals[h], self.departures[h]):
                if d > now:
                    keep_a.append(a)
                    keep_d.append(d)
                else:
                    gone += 1
            self.arrivals[h], self.departures[h] = keep_a, keep_d
            out.append(gone)
        return out


@dataclass
class DailyRecord:
    day: int
    occupancy_next: np.ndarray
    overbeds: np.ndarray
    underbeds: np.ndarray
    beds_open: np.ndarray
    beds_reserved: np.ndarray
    reserved_cost_beds: np.ndarray
    rooms_added: np.ndarray
    rooms_removed: np.ndarray
    admissions: np.ndarray
    discharges: np.ndarray
    forecast_costs: tuple[float, ...] | None


class _ForecastCache:
    """Per-replication memo for the daily arrival-rate refits.

    Compared rules see identical arrival histories under common random
    numbers, so the fitted curves are shared across rules within a worker.
    """

    def __init__(self):
        self._fits = {}
        self._last_params = None

    def rates(
        self, history: Sequence[int], horizon: int, mode: str, window: int | None = None
    ) -> RateCurve:
        key = (len(history), mode, window, horizon)
        hit = self._fits.get(key)
        if hit is not None:
            return hit
        series = np.asarray(history, dtype=float)
        if window is not None:
            series = series[-window:]
        fit = fit_richards(series, warm_start=self._last_params)
        self._last_params = fit.params
        curve = predict_rate(fit, len(series), horizon, mode=mode)
        self._fits[key] = curve
        return curve


def _ground_streams(config: SimConfig, rep: int):
    return np.random.default_rng(np.random.SeedSequence((config.seed, rep, 0)))


def _policy_stream(config: SimConfig, rep: int):
    return np.random.default_rng(np.random.SeedSequence((config.seed, rep, 1)))


def _scenario_seed(config: SimConfig, rep: int, day: int) -> int:
    return int(np.random.SeedSequence((config.seed, rep, 2, day)).generate_state(1)[0])


def _commit_rooms(state: RegionState, decision: DailyDecision, config: SimConfig):
    """Apply the plan's day-0 columns, blocking closings below current census.

    Rooms close from the highest index down; a closing that would push
    capacity below the current occupancy is undone.  Open rooms drop any
    leftover scheduling flags.
    """
    occupancy = state.occupancy()
    hospitals = []
    opened = np.zeros(config.n_hospitals, dtype=int)
    closed = np.zeros(config.n_hospitals, dtype=int)
    beds_open = np.zeros(config.n_hospitals, dtype=int)
    beds_reserved = np.zeros(config.n_hospitals, dtype=int)
    reserved_cost = np.zeros(config.n_hospitals, dtype=int)
    for h, hosp in enumerate(state.ledger.hospitals):
        beds = np.asarray(hosp.room_beds)
        z = decision.room_plan.open_rooms[h][:, 0].copy()
        v1 = decision.room_plan.sched1[h][:, 0].copy()
        v2 = decision.room_plan.sched2[h][:, 0].copy()
        m_plan = int(z.sum())
        m_prev = hosp.open_count
        m = m_plan
        if m < m_prev:
            # closing: keep the lowest-indexed rooms; stop closing once the
            # implied capacity would dip under the current census
            while m < m_prev and hosp.standard_capacity + beds[:m].sum() < occupancy[h]:
                m += 1
        z = np.array([1 if k < m else 0 for k in range(hosp.n_rooms)], dtype=int)
        v1[z == 1] = 0
        v2[z == 1] = 0
        hospitals.append(
            HospitalRooms(
                standard_capacity=hosp.standard_capacity,
                room_beds=hosp.room_beds,
                open_prev=tuple(int(x) for x in z),
                sched1_prev=tuple(int(x) for x in v1),
                sched2_prev=tuple(int(x) for x in v2),
            )
        )
        delta = m - m_prev
        opened[h] = max(delta, 0)
        closed[h] = max(-delta, 0)
        beds_open[h] = int(beds @ z)
        beds_reserved[h] = int(beds @ np.maximum(v1, v2))
        reserved_cost[h] = int(beds @ (v1 + v2))
    state.ledger = RoomLedger(hospitals=tuple(hospitals))
    capacity = np.asarray(config.standard_capacity) + beds_open
    return capacity, opened, closed, beds_open, beds_reserved, reserved_cost


def _decide(config: SimConfig, ctx: DecisionContext, policy_rng) -> DailyDecision:
    rule = config.rule
    if rule.kind in ("SP", "SP_DET"):
        return sp_decide(ctx, rule.weights, rel_gap=rule.rel_gap)
    if rule.kind == "IH":
        return ih_decide(ctx, quantile=rule.quantile, margins=rule.margins)
    if rule.kind == "PU":
        return pu_decide(
            ctx,
            policy_rng,
            designated=rule.designated,
            split=rule.split,
            quantile=rule.quantile,
            margins=rule.margins,
        )
    raise ValueError(f"unknown rule kind {rule.kind!r}")


def step_day(
    state: RegionState,
    config: SimConfig,
    gt_rng: np.random.Generator,
    policy_rng: np.random.Generator,
    forecasts: _ForecastCache,
    rep: int,
) -> DailyRecord:
    """Advance one decision epoch and return the day's scored record."""
    t = state.day
    now = float(config.warmup_days + t)
    s = config.lookahead

    rates = forecasts.rates(state.history, s, config.rule.rate_mode, config.fit_window)
    fractions = state.fractions
    scen_seed = _scenario_seed(config, rep, t)
    scenarios = generate_scenarios(
        state.rosters(now), fractions, rates, config.los, s, config.scenarios_per_day, scen_seed
    )
    if config.rule.kind == "SP_DET":
        scenarios = collapse_scenarios(scenarios, config.rule.statistic)
    assignable = tuple(fractions.assignable_share * r for r in rates.daily_rates[:s])
    pmf = assign_count_pmf(assignable[0])
    ctx = DecisionContext(
        day=t,
        ledger=state.ledger,
        occupancy=state.occupancy(),
        scenarios=scenarios,
        pmf=pmf,
        assignable_rates=assignable,
    )
    decision = _decide(config, ctx, policy_rng)
    capacity, opened, closed, beds_open, beds_reserved, reserved_cost = _commit_rooms(
        state, decision, config
    )

    # exogenous information: the day's arrivals realize from shared streams
    lam_true = config.ground_curve().daily_rates[config.warmup_days + t]
    k = int(gt_rng.poisson(lam_true))
    routing = gt_rng.random(k)
    instants = gt_rng.random(k)
    stay_uniforms = gt_rng.random(k)
    cum_f = np.cumsum(config.true_fractions)
    assignment = decision.assignment
    day_autonomous = np.zeros(config.n_hospitals, dtype=int)
    day_assigned = 0
    admissions = np.zeros(config.n_hospitals, dtype=int)
    stays = config.los.from_uniform(stay_uniforms) if k else np.zeros(0)
    for a in range(k):
        idx = int(np.searchsorted(cum_f, routing[a], side="right"))
        if idx < config.n_hospitals:
            h = idx
            day_autonomous[h] += 1
        else:
            day_assigned += 1
            j = day_assigned
            while j > assignment.truncation:
                extended = assignment_overflow(ctx, decision.room_plan, assignment)
                if extended.truncation == assignment.truncation:
                    break
                assignment = extended
            if j <= assignment.truncation:
                h = assignment.destinations[j - 1]
            else:
                # beyond any plan: most remaining committed capacity wins
                # (occupancy already includes today's earlier admissions)
                slack = capacity - np.asarray(state.occupancy())
                h = int(np.argmax(slack))
        arrival_instant = now + float(instants[a])
        state.admit(h, arrival_instant, arrival_instant + float(stays[a]))
        admissions[h] += 1

    discharges = np.asarray(state.discharge_until(now + 1.0))
    occupancy_next = np.asarray(state.occupancy())
    overbeds = np.maximum(occupancy_next - capacity, 0)
    underbeds = np.minimum(beds_open, np.maximum(capacity - occupancy_next, 0))

    state.fractions = update_fractions(state.fractions, day_autonomous, day_assigned)
    state.history.append(k)
    state.day += 1
    return DailyRecord(
        day=t,
        occupancy_next=occupancy_next,
        overbeds=overbeds,
        underbeds=underbeds,
        beds_open=beds_open,
        beds_reserved=beds_reserved,
        reserved_cost_beds=reserved_cost,
        rooms_added=opened,
        rooms_removed=closed,
        admissions=admissions,
        discharges=discharges,
        forecast_costs=decision.forecast_costs,
    )


def run_replication(
    config: SimConfig, rep: int, forecasts: _ForecastCache | None = None
) -> list[DailyRecord]:
    """One seeded world: warm-up history first, then the scored study days.

    ``forecasts`` may be shared across rules compared under common random
    numbers; their arrival histories coincide, so the refits are reusable.
    """
    state = RegionState(config)
    gt_rng = _ground_streams(config, rep)
    policy_rng = _policy_stream(config, rep)
    curve = config.ground_curve().daily_rates
    if len(curve) < config.warmup_days + config.study_days:
        raise ValueError("ground-truth rate curve shorter than warmup plus study window")
    for d in range(config.warmup_days):
        state.history.append(int(gt_rng.poisson(curve[d])))
    if forecasts is None:
        forecasts = _ForecastCache()
    return [
        step_day(state, config, gt_rng, policy_rng, forecasts, rep)
        for _ in range(config.study_days)
    ]


@dataclass(frozen=True)
class ReplicationSummary:
    """Per-replication daily means used by the aggregation."""

    per_hospital: dict  # kpi -> (H,) array
    region: dict  # kpi/cost name -> float


def summarise_replication(config: SimConfig, records: list[DailyRecord]) -> ReplicationSummary:
    days = len(records)
    per_h = {}
    stacked = {
        "overbeds": np.stack([r.overbeds for r in records]),
        "underbeds": np.stack([r.underbeds for r in records]),
        "reg_beds_used": np.stack([r.beds_open for r in records]),
        "beds_reserved": np.stack([r.beds_reserved for r in records]),
        "rooms_added_removed": np.stack([r.rooms_added + r.rooms_removed for r in records]),
    }
    for kpi, mat in stacked.items():
        per_h[kpi] = mat.mean(axis=0)
    region = {kpi: float(mat.sum(axis=1).mean()) for kpi, mat in stacked.items()}
    added = np.stack([r.rooms_added for r in records]).sum(axis=1)
    removed = np.stack([r.rooms_removed for r in records]).sum(axis=1)
    beds_open = stacked["reg_beds_used"].sum(axis=1)
    reserved_cost = np.stack([r.reserved_cost_beds for r in records]).sum(axis=1)
    over = stacked["overbeds"].sum(axis=1)
    for name, preset in WEIGHT_PRESETS.items():
        cost = (
            preset.alpha * added
            + preset.beta * removed
            + preset.gamma * beds_open
            + preset.delta * reserved_cost
            + preset.epsilon * over
        )
        region[f"avg_cost_{name}"] = float(cost.mean())
    fc = [r.forecast_costs for r in records if r.forecast_costs is not None]
    for u in range(3):
        if fc and all(len(c) > u for c in fc):
            region[FORECAST_NAMES[u]] = float(np.mean([c[u] for c in fc]))
        else:
            region[FORECAST_NAMES[u]] = math.nan
    return ReplicationSummary(per_hospital=per_h, region=region)


@dataclass(frozen=True)
class KpiTable:
    """Replication means with Student-t 95% half-widths."""

    rule_label: str
    entities: tuple[str, ...]
    rows: dict  # (entity, kpi) -> (mean, half_width)
    rep_values: dict  # (entity, kpi) -> np.ndarray over replications
    n_replications: int

    def mean(self, entity: str, kpi: str) -> float:
        return self.rows[(entity, kpi)][0]

    def half_width(self, entity: str, kpi: str) -> float:
        return self.rows[(entity, kpi)][1]

    def to_json(self) -> dict:
        clean = lambda v: v if math.isfinite(v) else None
        return {
            "rule": self.rule_label,
            "replications": self.n_replications,
            "rows": [
                {"entity": e, "kpi": k, "mean": clean(m), "half_width": clean(hw)}
                for (e, k), (m, hw) in sorted(self.rows.items())
            ],
        }

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("rule,entity,kpi,mean,half_width\n")
            for (e, k), (m, hw) in sorted(self.rows.items()):
                fh.write(f"{self.rule_label},{e},{k},{m:.6f},{hw:.6f}\n")


def _t_interval(values: np.ndarray) -> tuple[float, float]:
    n = len(values)
    mean = float(np.mean(values))
    if n < 2:
        return mean, math.nan
    hw = float(stats.t.ppf(0.975, n - 1) * np.std(values, ddof=1) / math.sqrt(n))
    return mean, hw


def aggregate_summaries(config: SimConfig, summaries: list[ReplicationSummary]) -> KpiTable:
    entities = tuple(config.hospital_ids) + (REGION,)
    rows = {}
    rep_values = {}
    for kpi in KPI_NAMES:
        for h, hid in enumerate(config.hospital_ids):
            vals = np.array([s.per_hospital[kpi][h] for s in summaries])
            rep_values[(hid, kpi)] = vals
            rows[(hid, kpi)] = _t_interval(vals)
        vals = np.array([s.region[kpi] for s in summaries])
        rep_values[(REGION, kpi)] = vals
        rows[(REGION, kpi)] = _t_interval(vals)
    for name in COST_NAMES + FORECAST_NAMES:
        vals = np.array([s.region[name] for s in summaries])
        rep_values[(REGION, name)] = vals
        rows[(REGION, name)] = _t_interval(vals) if np.all(np.isfinite(vals)) else (math.nan, math.nan)
    return KpiTable(
        rule_label=config.rule.label(),
        entities=entities,
        rows=rows,
        rep_values=rep_values,
        n_replications=len(summaries),
    )


def _study_worker(args):
    config, rep = args
    records = run_replication(config, rep)
    return rep, summarise_replication(config, records)


def _max_workers() -> int:
    env = os.environ.get("WARDPLAN_THREADS")
    if env:
        return max(1, int(env))
    return max(1, os.cpu_count() or 1)


def run_study(config: SimConfig, progress: Callable[[int], None] | None = None) -> KpiTable:
    """All replications of one rule, aggregated into the KPI table."""
    tasks = [(config, rep) for rep in range(config.replications)]
    results = {}
    workers = min(_max_workers(), config.replications)
    if workers == 1:
        for t_args in tasks:
            rep, summary = _study_worker(t_args)
            results[rep] = summary
            if progress:
                progress(rep)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for rep, summary in pool.map(_study_worker, tasks, chunksize=1):
                results[rep] = summary
                if progress:
                    progress(rep)
    summaries = [results[rep] for rep in range(config.replications)]
    return aggregate_summaries(config, summaries)


def _compare_worker(args):
    configs, rep = args
    out = []
    shared = _ForecastCache()
    for config in configs:
        cache = shared if config.rule.rate_mode == "point" else _ForecastCache()
        records = run_replication(config, rep, forecasts=cache)
        out.append(summarise_replication(config, records))
    return rep, out


@dataclass(frozen=True)
class ComparisonReport:
    """Per-rule tables plus paired deltas under common random numbers."""

    tables: tuple[KpiTable, ...]

    def table(self, label: str) -> KpiTable:
        for t in self.tables:
            if t.rule_label == label:
                return t
        raise KeyError(label)

    def delta(self, label_a: str, label_b: str, entity: str, kpi: str):
        """Paired mean difference a - b with its 95% half-width."""
        a = self.table(label_a).rep_values[(entity, kpi)]
        b = self.table(label_b).rep_values[(entity, kpi)]
        return _t_interval(a - b)

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("rule,entity,kpi,mean,half_width\n")
            for t in self.tables:
                for (e, k), (m, hw) in sorted(t.rows.items()):
                    fh.write(f"{t.rule_label},{e},{k},{m:.6f},{hw:.6f}\n")


def compare_rules(
    configs: Sequence[SimConfig], progress: Callable[[int], None] | None = None
) -> ComparisonReport:
    """Run several rules against shared ground-truth streams and pair them.

    All configs must agree on everything except the rule; each replication
    runs every rule inside the same worker so the arrival-rate refits are
    shared and the realized worlds stay aligned.
    """
    base = configs[0]
    for c in configs[1:]:
        if (
            c.seed != base.seed
            or c.replications != base.replications
            or c.study_days != base.study_days
            or c.hospital_ids != base.hospital_ids
        ):
            raise ValueError("compared configs must share seed, horizon, and hospitals")
    labels = [c.rule.label() for c in configs]
    if len(set(labels)) != len(labels):
        labels = [f"{lab}#{k + 1}" for k, lab in enumerate(labels)]
    tasks = [(tuple(configs), rep) for rep in range(base.replications)]
    results = {}
    workers = min(_max_workers(), base.replications)
    if workers == 1:
        for t_args in tasks:
            rep, summaries = _compare_worker(t_args)
            results[rep] = summaries
            if progress:
                progress(rep)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for rep, summaries in pool.map(_compare_worker, tasks, chunksize=1):
                results[rep] = summaries
                if progress:
                    progress(rep)
    tables = []
    for k, config in enumerate(configs):
        summaries = [results[rep][k] for rep in range(base.replications)]
        table = aggregate_summaries(config, summaries)
        if table.rule_label != labels[k]:
            table = replace(table, rule_label=labels[k])
        tables.append(table)
    return ComparisonReport(tables=tuple(tables))
