"""Daily decision rules: linked stochastic programs and the two heuristics.

``sp_decide`` chains the two programs: solve the room program, freeze its
capacity schedule, then solve the assignment program against that schedule,
all before the day's arrivals are known.  ``ih_decide`` scales each
hospital from its own occupancy quantile forecast with no regional routing;
``pu_decide`` funnels patients to one designated hospital until it runs out
of headroom.  ``assignment_overflow`` extends a day's assignment plan when
more patients show up than the truncation covered.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import poisson

from .milp import (
    AssignmentPlan,
    CostWeights,
    MilpModel,
    RoomLedger,
    RoomPlan,
    build_sp1,
    build_sp2,
    decode_sp1,
    decode_sp2,
)
from .scenarios import AssignCountPmf, ScenarioSet
from .solver import solve_milp


@dataclass(frozen=True)
class DecisionContext:
    """Everything a rule may look at when the decision epoch fires."""

    day: int
    ledger: RoomLedger
    occupancy: tuple[int, ...]
    scenarios: ScenarioSet
    pmf: AssignCountPmf
    assignable_rates: tuple[float, ...]  # expected assignable arrivals per lookahead day

    def __post_init__(self):
        if self.scenarios.horizon < 3:
            raise ValueError("decision context needs a lookahead of at least 3 days")
        if len(self.occupancy) != self.ledger.n_hospitals:
            raise ValueError("occupancy vector does not match the ledger")


@dataclass(frozen=True)
class DailyDecision:
    """A day's committed room plan and assignment plan plus diagnostics."""

    room_plan: RoomPlan
    assignment: AssignmentPlan
    forecast_costs: tuple[float, ...] | None = None  # horizons 1..3, SP rules only
    approximate: bool = False

    def to_json(self) -> dict:
        return {
            "room_plan": self.room_plan.to_json(),
            "assignment": self.assignment.to_json(),
            "forecast_costs": list(self.forecast_costs) if self.forecast_costs else None,
            "approximate": self.approximate,
        }


def _point_from_room_plan(plan: RoomPlan, ctx: DecisionContext, idx) -> np.ndarray:
    """Feasible SP1 vector for a given room schedule with greedy routing.

    Arrivals go, unit by unit, to the hospital where the stay adds the
    fewest overbed-days under the plan's capacity schedule.
    """
    scen = ctx.scenarios
    s, I, H = idx.horizon, idx.n_scenarios, ctx.ledger.n_hospitals
    point = np.zeros(idx.n_vars)
    for h in range(H):
        z = plan.open_rooms[h]
        v1 = plan.sched1[h]
        v2 = plan.sched2[h]
        for n in range(z.shape[0]):
            base = n * s
            point[idx.z_off[h] + base : idx.z_off[h] + base + s] = z[n]
            point[idx.v1_off[h] + base : idx.v1_off[h] + base + s] = v1[n]
            point[idx.v2_off[h] + base : idx.v2_off[h] + base + s] = v2[n]
        prev = ctx.ledger.hospitals[h].open_count
        for u in range(s):
            cur = int(z[:, u].sum())
            delta = cur - prev
            point[idx.yplus(h, u)] = max(delta, 0)
            point[idx.yminus(h, u)] = max(-delta, 0)
            prev = cur
    cap = plan.capacity_schedule().astype(float)  # (H, s)
    for i in range(I):
        loads = scen.occupancy[i].astype(float).copy()
        for u in range(s):
            for _unit in range(int(scen.arrivals[i, u])):
                over_days = (loads[:, u:] >= cap[:, u:]).sum(axis=1)
                h = int(np.argmin(over_days))
                loads[h, u:] += 1.0
                point[idx.x(i, h, u + 1)] += 1.0
        over = np.maximum(loads - cap, 0.0)
        for h in range(H):
            for u in range(1, s + 1):
                point[idx.occupancy(i, h, u)] = loads[h, u - 1]
                point[idx.overbeds(i, h, u)] = over[h, u - 1]
    return point


def _sp1_warm_start(ctx: DecisionContext, idx, model) -> np.ndarray:
    """Best of a few heuristic schedules: keep yesterday, or scale to the
    mean / 75% / 90% scenario occupancy two days out."""
    candidates = [tuple(h.open_count for h in ctx.ledger.hospitals)]
    stats = [ctx.scenarios.occupancy[:, :, min(1, ctx.scenarios.horizon - 1)].mean(axis=0)]
    for q in (0.75, 0.9):
        stats.append(ctx.scenarios.occupancy_quantile(min(2, ctx.scenarios.horizon), q))
    for stat in stats:
        targets = []
        for h, hosp in enumerate(ctx.ledger.hospitals):
            demand = max(float(ctx.occupancy[h]), float(stat[h]))
            targets.append(_prefix_target(hosp, demand))
        candidates.append(tuple(targets))
    best_point, best_obj = None, math.inf
    for targets in dict.fromkeys(candidates):
        plan = _roll_forward_plan(ctx.ledger, targets, ctx.scenarios.horizon)
        point = _point_from_room_plan(plan, ctx, idx)
        obj = model.evaluate(point)
        if obj < best_obj:
            best_obj, best_point = obj, point
    return best_point


def sp_decide(
    ctx: DecisionContext,
    weights: CostWeights,
    rel_gap: float = 1e-4,
    node_limit: int | None = None,
    time_limit: float | None = None,
) -> DailyDecision:
    """Solve the room program, then the assignment program on its capacities."""
    model1, idx1 = build_sp1(ctx.ledger, ctx.scenarios, weights)
    warm = _sp1_warm_start(ctx, idx1, model1)
    res1 = solve_milp(
        model1, rel_gap=rel_gap, node_limit=node_limit, time_limit=time_limit, warm_start=warm
    )
    if res1.values is None:
        raise RuntimeError(f"room program came back {res1.status} without a solution")
    plan = decode_sp1(res1.values, idx1)
    approx = res1.status in ("node_limit", "time_limit")

    s = ctx.scenarios.horizon
    I = ctx.scenarios.count
    H = ctx.ledger.n_hospitals
    o_vals = np.asarray(res1.values[idx1.o_off :]).reshape(I, H, s)
    mean_overbeds = o_vals.mean(axis=0).sum(axis=0)  # regional, by day 1..s
    horizons = tuple(u for u in (1, 2, 3) if u <= s)
    costs = forecast_cost(plan, mean_overbeds, weights, horizons)

    capacity = plan.capacity_schedule().astype(float)
    model2, idx2 = build_sp2(capacity, ctx.scenarios, ctx.pmf)
    res2 = solve_milp(model2, rel_gap=rel_gap, node_limit=node_limit, time_limit=time_limit)
    if res2.values is None:
        raise RuntimeError(f"assignment program came back {res2.status} without a solution")
    assignment = decode_sp2(res2.values, idx2)
    approx = approx or res2.status in ("node_limit", "time_limit")
    return DailyDecision(
        room_plan=plan, assignment=assignment, forecast_costs=costs, approximate=approx
    )


def forecast_cost(
    plan: RoomPlan,
    mean_overbeds: Sequence[float],
    weights: CostWeights,
    horizons: Sequence[int] = (1, 2, 3),
) -> tuple[float, ...]:
    """Cost attributed to day t+u under the plan and scenario-average overbeds.

    Mirrors the daily terms of the room program's objective: room changes,
    open beds, reserved beds, and the scenario-mean overbeds of that day
    (without the terminal-day reweighting, so values compare directly with
    realized daily cost).
    """
    s = plan.horizon
    out = []
    for u in horizons:
        if not 1 <= u <= s:
            raise ValueError(f"horizon {u} outside the plan's lookahead")
        day = min(u, s - 1)
        open_beds = float(plan.open_beds(day).sum())
        reserved = 0.0
        changes_plus = 0.0
        changes_minus = 0.0
        for h in range(len(plan.open_rooms)):
            beds = np.asarray(plan.room_beds[h])
            if u <= s - 1:
                reserved += float(beds @ (plan.sched1[h][:, u] + plan.sched2[h][:, u]))
                delta = int(plan.open_rooms[h][:, u].sum() - plan.open_rooms[h][:, u - 1].sum())
                changes_plus += max(delta, 0)
                changes_minus += max(-delta, 0)
        cost = (
            weights.alpha * changes_plus
            + weights.beta * changes_minus
            + weights.gamma * open_beds
            + weights.delta * reserved
            + weights.epsilon * float(mean_overbeds[u - 1])
        )
        out.append(cost)
    return tuple(out)


def _prefix_target(hosp, forecast: float) -> int:
    """Fewest rooms whose combined capacity covers the forecast."""
    cap = hosp.standard_capacity
    if forecast <= cap:
        return 0
    for m, b in enumerate(hosp.room_beds, start=1):
        cap += b
        if forecast <= cap:
            return m
    return hosp.n_rooms


def _apply_scale_down_guard(hosp, target: int, forecast: float, margin: float) -> int:
    """Closing is blocked while the forecast plus margin exceeds current capacity."""
    if target < hosp.open_count and forecast + margin > hosp.capacity_prev:
        return hosp.open_count
    return target


def _roll_forward_plan(ledger: RoomLedger, targets: Sequence[int], s: int) -> RoomPlan:
    """Project room states over the lookahead holding each target constant.

    Day by day: a room below the target opens once its preparation chain
    completes (scheduled flags advance v2 -> v1 -> open); rooms at or above
    the target close immediately and their flags are dropped.
    """
    opens, s1s, s2s, opened, closed = [], [], [], [], []
    for h, hosp in enumerate(ledger.hospitals):
        nh = hosp.n_rooms
        m = int(targets[h])
        z = np.zeros((nh, s), dtype=np.int64)
        v1 = np.zeros((nh, s), dtype=np.int64)
        v2 = np.zeros((nh, s), dtype=np.int64)
        z_day = np.asarray(hosp.open_prev)
        v1_day = np.asarray(hosp.sched1_prev)
        v2_day = np.asarray(hosp.sched2_prev)
        for u in range(s):
            z_col = np.zeros(nh, dtype=np.int64)
            for k in range(nh):
                openable = z_day[k] or v1_day[k]
                if k < m and openable and (k == 0 or z_col[k - 1]):
                    z_col[k] = 1
                else:
                    break
            v1_col = np.zeros(nh, dtype=np.int64)
            v2_col = np.zeros(nh, dtype=np.int64)
            for k in range(nh):
                if k < m and not z_col[k]:
                    if v1_day[k] or v2_day[k]:
                        v1_col[k] = 1
                    else:
                        v2_col[k] = 1
            z_day, v1_day, v2_day = z_col, v1_col, v2_col
            z[:, u], v1[:, u], v2[:, u] = z_col, v1_col, v2_col
        opens.append(z)
        s1s.append(v1)
        s2s.append(v2)
        delta = int(z[:, 0].sum()) - hosp.open_count
        opened.append(max(delta, 0))
        closed.append(max(-delta, 0))
    return RoomPlan(
        open_rooms=tuple(opens),
        sched1=tuple(s1s),
        sched2=tuple(s2s),
        opened=tuple(opened),
        closed=tuple(closed),
        standard_capacity=tuple(h.standard_capacity for h in ledger.hospitals),
        room_beds=tuple(h.room_beds for h in ledger.hospitals),
    )


def ih_decide(
    ctx: DecisionContext,
    quantile: float = 0.90,
    margins: Sequence[float] = (3.0, 2.0, 2.0),
) -> DailyDecision:
    """Each hospital scales to its own occupancy forecast; nobody is routed.

    Forecast = max(current occupancy, scenario quantile of the occupancy two
    days out), since opening takes two days.
    """
    q2 = ctx.scenarios.occupancy_quantile(2, quantile)
    targets = []
    for h, hosp in enumerate(ctx.ledger.hospitals):
        forecast = max(float(ctx.occupancy[h]), float(q2[h]))
        target = _prefix_target(hosp, forecast)
        target = _apply_scale_down_guard(hosp, target, forecast, float(margins[h]))
        targets.append(target)
    plan = _roll_forward_plan(ctx.ledger, targets, ctx.scenarios.horizon)
    return DailyDecision(room_plan=plan, assignment=AssignmentPlan(destinations=()))


def pu_decide(
    ctx: DecisionContext,
    rng: np.random.Generator,
    designated: int = 0,
    split: Sequence[float] = (0.61, 0.39),
    quantile: float = 0.90,
    margins: Sequence[float] = (3.0, 2.0, 2.0),
) -> DailyDecision:
    """Send everyone to the designated hospital until its headroom is gone.

    Room side: the designated hospital's forecast absorbs the full expected
    assignable inflow until all its rooms are committed; only then does the
    residual rate, split by the configured ratios, feed the other hospitals'
    forecasts (which stay gated shut otherwise).  Assignment side: patients
    go to the designated hospital while the projected load stays under
    capacity minus the autonomous-occupancy forecast, then are split at
    random by the same ratios.
    """
    H = ctx.ledger.n_hospitals
    des = designated
    others = [h for h in range(H) if h != des]
    share = np.asarray(split, dtype=float)
    if len(share) != len(others) or share.sum() <= 0:
        raise ValueError("split ratios must cover the non-designated hospitals")
    share = share / share.sum()

    q2 = ctx.scenarios.occupancy_quantile(2, quantile)
    auto_forecast = np.maximum(np.asarray(ctx.occupancy, dtype=float), q2.astype(float))

    # expected assignable patients present at the forecast day (2-day-ahead,
    # arrivals stay for the whole lookahead)
    lead = min(2, len(ctx.assignable_rates))
    expected_assigned = float(sum(ctx.assignable_rates[:lead]))

    des_hosp = ctx.ledger.hospitals[des]
    des_max_cap = des_hosp.standard_capacity + sum(des_hosp.room_beds)
    targets = [0] * H
    des_demand = auto_forecast[des] + expected_assigned
    des_target = _prefix_target(des_hosp, des_demand)
    if des_target < des_hosp.n_rooms:
        # designated hospital absorbs everything; the rest stay gated
        targets[des] = des_target
        for h in others:
            gated = min(_prefix_target(ctx.ledger.hospitals[h], auto_forecast[h]),
                        ctx.ledger.hospitals[h].open_count)
            targets[h] = gated
    else:
        targets[des] = des_hosp.n_rooms
        residual = max(0.0, des_demand - des_max_cap)
        for k, h in enumerate(others):
            targets[h] = _prefix_target(
                ctx.ledger.hospitals[h], auto_forecast[h] + share[k] * residual
            )
    for h in range(H):
        targets[h] = _apply_scale_down_guard(
            ctx.ledger.hospitals[h], targets[h], auto_forecast[h], float(margins[h])
        )
    plan = _roll_forward_plan(ctx.ledger, targets, ctx.scenarios.horizon)

    capacity_today = plan.capacity_schedule()[:, 0]
    destinations = []
    sent = 0
    for _j in range(1, ctx.pmf.truncation + 1):
        if auto_forecast[des] + sent < capacity_today[des] - 1e-9:
            destinations.append(des)
            sent += 1
        else:
            pick = int(rng.choice(len(others), p=share))
            destinations.append(others[pick])
    return DailyDecision(
        room_plan=plan, assignment=AssignmentPlan(destinations=tuple(destinations))
    )


def assignment_overflow(
    ctx: DecisionContext,
    room_plan: RoomPlan,
    plan: AssignmentPlan,
    rel_gap: float = 1e-4,
) -> AssignmentPlan:
    """Extend a day's plan to twice its truncation after excess arrivals.

    The assignment program is re-solved with limit 2J, zero probability mass
    on counts up to J (those patients are already placed; their destinations
    are pinned), and the Poisson tail beyond.
    """
    j_old = plan.truncation
    j_new = 2 * j_old
    if j_new == j_old:
        return plan
    rate = ctx.pmf.rate
    probs = [0.0] * (j_old + 1) + [float(poisson.pmf(j, rate)) for j in range(j_old + 1, j_new + 1)]
    pmf2 = AssignCountPmf(rate=rate, truncation=j_new, probabilities=tuple(probs))
    capacity = room_plan.capacity_schedule().astype(float)
    model, idx = build_sp2(capacity, ctx.scenarios, pmf2)
    lb = model.lb.copy()
    ub = model.ub.copy()
    for j, dest in enumerate(plan.destinations, start=1):
        for h in range(idx.n_hospitals):
            fixed = 1.0 if h == dest else 0.0
            lb[idx.w(j, h)] = fixed
            ub[idx.w(j, h)] = fixed
    pinned = MilpModel(
        lb=lb, ub=ub, kinds=model.kinds, matrix=model.matrix, senses=model.senses,
        rhs=model.rhs, objective=model.objective, offset=model.offset, names=model.names,
    )
    res = solve_milp(pinned, rel_gap=rel_gap)
    if res.values is None:
        raise RuntimeError(f"overflow assignment came back {res.status}")
    extended = decode_sp2(res.values, idx)
    assert extended.destinations[:j_old] == plan.destinations
    return extended
