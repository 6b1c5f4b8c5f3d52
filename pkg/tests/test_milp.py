import math

import numpy as np
import pytest

from conftest import enumerate_sp1_optimum
from wardplan.milp import (
    AssignmentPlan,
    BuildError,
    CostWeights,
    DecodeError,
    HospitalRooms,
    RoomLedger,
    SP_B,
    SP_O,
    SP_R,
    build_sp1,
    build_sp2,
    decode_sp1,
    decode_sp2,
)
from wardplan.scenarios import AssignCountPmf, ScenarioSet
from wardplan.solver import solve_lp, solve_milp

W = CostWeights(2.0, 1.0, 1.0, 0.5, 10.0)


def ledger_1h(open_prev=(0, 0), sched1=(0, 0), sched2=(0, 0), beds=(2, 3), cap=4):
    return RoomLedger(
        hospitals=(
            HospitalRooms(
                standard_capacity=cap,
                room_beds=beds,
                open_prev=open_prev,
                sched1_prev=sched1,
                sched2_prev=sched2,
            ),
        )
    )


def scen(occ, arr, s):
    return ScenarioSet(
        horizon=s,
        occupancy=np.asarray(occ, dtype=np.int64),
        arrivals=np.asarray(arr, dtype=np.int64),
        seed=0,
    )


def zero_scen(I, H, s):
    return scen(np.zeros((I, H, s)), np.zeros((I, s)), s)


class TestLedger:
    def test_prefix_violation(self):
        with pytest.raises(ValueError):
            HospitalRooms(4, (2, 3), (0, 1), (0, 0), (0, 0))

    def test_open_and_scheduled_conflict(self):
        with pytest.raises(ValueError):
            HospitalRooms(4, (2, 3), (1, 0), (1, 0), (0, 0))

    def test_fresh(self):
        led = RoomLedger.fresh([4, 8], [(2, 3), (5,)])
        assert led.n_hospitals == 2
        assert led.hospitals[1].room_beds == (5,)


class TestBuildSp1:
    def test_variable_count_formula(self):
        model, idx = build_sp1(ledger_1h(), zero_scen(1, 1, 3), W)
        # 3 flag kinds x 2 rooms x 3 days + 2 y kinds x 3 days + 3 series x 1 scenario x 3 days
        assert model.n_vars == 3 * (2 * 3) + 2 * 3 + 1 * 3 * 3
        assert idx.n_vars == model.n_vars

    def test_zero_case_stays_closed(self):
        model, idx = build_sp1(ledger_1h(), zero_scen(2, 1, 3), W)
        res = solve_milp(model, rel_gap=0.0)
        assert res.is_optimal
        assert res.objective == pytest.approx(0.0, abs=1e-9)
        plan = decode_sp1(res.values, idx)
        assert all(a.sum() == 0 for a in plan.open_rooms)
        assert all(a.sum() == 0 for a in plan.sched1 + plan.sched2)

    def test_horizon_too_short(self):
        with pytest.raises(BuildError):
            build_sp1(ledger_1h(), zero_scen(1, 1, 2), W)

    def test_always_feasible_by_construction(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            H = int(rng.integers(1, 4))
            s = int(rng.integers(3, 6))
            I = int(rng.integers(1, 4))
            hospitals = []
            for _h in range(H):
                nh = int(rng.integers(1, 4))
                beds = tuple(int(b) for b in rng.integers(1, 6, nh))
                n_open = int(rng.integers(0, nh + 1))
                open_prev = tuple(1 if k < n_open else 0 for k in range(nh))
                sched1 = tuple(
                    int(rng.integers(0, 2)) if not open_prev[k] else 0 for k in range(nh)
                )
                sched2 = tuple(
                    int(rng.integers(0, 2)) if not open_prev[k] and not sched1[k] else 0
                    for k in range(nh)
                )
                hospitals.append(
                    HospitalRooms(int(rng.integers(2, 12)), beds, open_prev, sched1, sched2)
                )
            ledger = RoomLedger(hospitals=tuple(hospitals))
            scearios = scen(
                rng.integers(0, 15, (I, H, s)), rng.integers(0, 6, (I, s)), s
            )
            model, idx = build_sp1(ledger, scearios, W)
            x = feasible_point_sp1(ledger, scearios, idx)
            assert model.max_violation(x) <= 1e-9

    def test_hand_point_matches_termwise_objective(self):
        rng = np.random.default_rng(11)
        ledger = RoomLedger(
            hospitals=(
                HospitalRooms(4, (2, 3), (1, 0), (0, 1), (0, 0)),
                HospitalRooms(6, (4,), (0,), (0,), (1,)),
            )
        )
        s, I = 4, 3
        scenarios = scen(rng.integers(0, 12, (I, 2, s)), rng.integers(0, 5, (I, s)), s)
        model, idx = build_sp1(ledger, scenarios, W)
        x = feasible_point_sp1(ledger, scenarios, idx)
        assert model.max_violation(x) <= 1e-9
        assert model.evaluate(x) == pytest.approx(
            termwise_sp1_objective(ledger, scenarios, W, x, idx), abs=1e-9
        )

    def test_tiny_instance_matches_enumeration(self):
        rng = np.random.default_rng(2)
        ledger = ledger_1h(open_prev=(1, 0), sched1=(0, 1))
        scenarios = scen(rng.integers(0, 9, (2, 1, 3)), rng.integers(0, 4, (2, 3)), 3)
        model, idx = build_sp1(ledger, scenarios, W)
        res = solve_milp(model, rel_gap=0.0)
        oracle = enumerate_sp1_optimum(ledger, scenarios, W)
        assert res.is_optimal
        assert res.objective == pytest.approx(oracle, abs=1e-7)

    def test_second_stage_decomposes_per_scenario(self):
        rng = np.random.default_rng(9)
        ledger = ledger_1h(open_prev=(1, 1))
        scenarios = scen(rng.integers(0, 10, (3, 1, 3)), rng.integers(0, 4, (3, 3)), 3)
        model, idx = build_sp1(ledger, scenarios, W)
        # freeze the first stage at "keep everything as yesterday"
        lb = model.lb.copy()
        ub = model.ub.copy()
        point = feasible_point_sp1(ledger, scenarios, idx)
        n_first = idx.x_off
        lb[:n_first] = point[:n_first]
        ub[:n_first] = point[:n_first]
        full = solve_lp(model, lb, ub, backend="highs")
        assert full.is_optimal
        total = 0.0
        for i in range(scenarios.count):
            single = scen(
                scenarios.occupancy[i : i + 1], scenarios.arrivals[i : i + 1], 3
            )
            m1, idx1 = build_sp1(ledger, single, W)
            lb1, ub1 = m1.lb.copy(), m1.ub.copy()
            p1 = feasible_point_sp1(ledger, single, idx1)
            lb1[: idx1.x_off] = p1[: idx1.x_off]
            ub1[: idx1.x_off] = p1[: idx1.x_off]
            total += solve_lp(m1, lb1, ub1, backend="highs").objective
        # each single-scenario model pays the full first-stage cost, so the
        # scenario average of their optima equals the full model's optimum
        assert full.objective == pytest.approx(total / scenarios.count, abs=1e-6)


class TestDecodeSp1:
    def test_round_trip_and_errors(self):
        ledger = ledger_1h(open_prev=(1, 0), sched1=(0, 1))
        scenarios = zero_scen(1, 1, 3)
        model, idx = build_sp1(ledger, scenarios, W)
        x = feasible_point_sp1(ledger, scenarios, idx)
        plan = decode_sp1(x, idx)
        assert plan.open_rooms[0][0, 0] == 1
        assert plan.opened == (0,) and plan.closed == (0,)
        bad = x.copy()
        bad[idx.z(0, 0, 1)] = 0.5
        with pytest.raises(DecodeError):
            decode_sp1(bad, idx)
        # sequential violation: open room 2 without room 1
        bad2 = x.copy()
        bad2[idx.z(0, 0, 2)] = 0.0
        bad2[idx.z(0, 1, 2)] = 1.0
        with pytest.raises(DecodeError):
            decode_sp1(bad2, idx)

    def test_capacity_schedule(self):
        ledger = ledger_1h(open_prev=(1, 0), sched1=(0, 1), beds=(2, 3), cap=4)
        model, idx = build_sp1(ledger, zero_scen(1, 1, 3), W)
        x = feasible_point_sp1(ledger, zero_scen(1, 1, 3), idx)
        plan = decode_sp1(x, idx)
        cap = plan.capacity_schedule()
        assert cap.shape == (1, 3)
        assert cap[0, 0] == 4 + 2  # room 1 stays open


class TestBuildSp2:
    def test_j_zero_has_no_w(self):
        scenarios = zero_scen(2, 2, 3)
        pmf = AssignCountPmf(rate=0.0, truncation=0, probabilities=(1.0,))
        capacity = np.full((2, 3), 5.0)
        model, idx = build_sp2(capacity, scenarios, pmf)
        assert idx.truncation == 0
        res = solve_milp(model, rel_gap=0.0)
        assert res.is_optimal
        assert decode_sp2(res.values, idx).destinations == ()

    def test_routes_to_slack_hospital(self):
        # hospital 0 saturated in every scenario, hospital 1 empty
        occ = np.zeros((2, 2, 3), dtype=int)
        occ[:, 0, :] = 6
        scenarios = scen(occ, np.zeros((2, 3)), 3)
        pmf = AssignCountPmf(rate=0.5, truncation=1, probabilities=(0.6, 0.3))
        capacity = np.array([[6.0, 6.0, 6.0], [6.0, 6.0, 6.0]])
        model, idx = build_sp2(capacity, scenarios, pmf)
        res = solve_milp(model, rel_gap=0.0)
        plan = decode_sp2(res.values, idx)
        assert plan.destinations == (1,)

    def test_zero_weight_arrivals_do_not_change_objective(self):
        rng = np.random.default_rng(4)
        scenarios = scen(rng.integers(0, 6, (2, 2, 3)), rng.integers(0, 3, (2, 3)), 3)
        pmf = AssignCountPmf(rate=1.0, truncation=2, probabilities=(0.5, 0.2, 0.0))
        capacity = np.full((2, 3), 4.0)
        model, idx = build_sp2(capacity, scenarios, pmf)
        base = solve_milp(model, rel_gap=0.0)
        # force arrival 2 to each destination in turn; optimum must not move
        for h in range(2):
            lb = model.lb.copy()
            ub = model.ub.copy()
            for hh in range(2):
                lb[idx.w(2, hh)] = 1.0 if hh == h else 0.0
                ub[idx.w(2, hh)] = 1.0 if hh == h else 0.0
            from wardplan.milp import MilpModel

            forced = MilpModel(
                lb=lb, ub=ub, kinds=model.kinds, matrix=model.matrix, senses=model.senses,
                rhs=model.rhs, objective=model.objective, offset=model.offset, names=model.names,
            )
            res = solve_milp(forced, rel_gap=0.0)
            assert res.objective == pytest.approx(base.objective, abs=1e-8)

    def test_extra_capacity_never_hurts(self):
        rng = np.random.default_rng(14)
        scenarios = scen(rng.integers(0, 8, (3, 2, 3)), rng.integers(0, 3, (3, 3)), 3)
        pmf = AssignCountPmf(rate=1.5, truncation=3, probabilities=(0.22, 0.33, 0.25, 0.12))
        capacity = np.full((2, 3), 5.0)
        base = solve_milp(build_sp2(capacity, scenarios, pmf)[0], rel_gap=0.0)
        more = capacity.copy()
        more[0, :] += 3.0
        richer = solve_milp(build_sp2(more, scenarios, pmf)[0], rel_gap=0.0)
        assert richer.objective <= base.objective + 1e-9

    def test_hand_point_matches_termwise_objective(self):
        rng = np.random.default_rng(21)
        scenarios = scen(rng.integers(0, 9, (2, 2, 4)), rng.integers(0, 4, (2, 4)), 4)
        pmf = AssignCountPmf(rate=1.0, truncation=2, probabilities=(0.4, 0.35, 0.15))
        capacity = np.asarray(rng.integers(3, 9, (2, 4)), dtype=float)
        model, idx = build_sp2(capacity, scenarios, pmf)
        x = feasible_point_sp2(capacity, scenarios, pmf, idx)
        assert model.max_violation(x) <= 1e-9
        assert model.evaluate(x) == pytest.approx(
            termwise_sp2_objective(capacity, scenarios, pmf, x, idx), abs=1e-9
        )

    def test_decode_rejects_split_row(self):
        scenarios = zero_scen(1, 2, 3)
        pmf = AssignCountPmf(rate=0.5, truncation=1, probabilities=(0.6, 0.3))
        model, idx = build_sp2(np.full((2, 3), 4.0), scenarios, pmf)
        x = np.zeros(model.n_vars)
        x[idx.w(1, 0)] = 0.5
        x[idx.w(1, 1)] = 0.5
        with pytest.raises(DecodeError):
            decode_sp2(x, idx)


class TestLpExport:
    def test_writes_readable_file(self, tmp_path):
        model, _ = build_sp1(ledger_1h(), zero_scen(1, 1, 3), W)
        path = tmp_path / "sp1.lp"
        model.write_lp(path)
        text = path.read_text()
        assert text.startswith("Minimize")
        assert "Binary" in text and "Subject To" in text


def feasible_point_sp1(ledger, scenarios, idx):
    """Keep yesterday's rooms, route everyone to hospital 0, absorb with overbeds."""
    s, I = idx.horizon, idx.n_scenarios
    x = np.zeros(idx.n_vars)
    for h, hosp in enumerate(ledger.hospitals):
        for n in range(hosp.n_rooms):
            for u in range(s):
                x[idx.z(h, n, u)] = hosp.open_prev[n]
    cap = np.array(
        [h.standard_capacity + sum(b for b, z in zip(h.room_beds, h.open_prev) if z) for h in ledger.hospitals],
        dtype=float,
    )
    for i in range(I):
        for u in range(1, s + 1):
            x[idx.x(i, 0, u)] = scenarios.arrivals[i, u - 1]
        for h in range(ledger.n_hospitals):
            cum = 0.0
            for u in range(1, s + 1):
                if h == 0:
                    cum += scenarios.arrivals[i, u - 1]
                occ = scenarios.occupancy[i, h, u - 1] + cum
                x[idx.occupancy(i, h, u)] = occ
                x[idx.overbeds(i, h, u)] = max(0.0, occ - cap[h])
    return x


def termwise_sp1_first_stage(ledger, weights, x, idx):
    alpha, beta, gamma, delta, eps = weights.as_tuple()
    s = idx.horizon
    total = 0.0
    for h, hosp in enumerate(ledger.hospitals):
        for u in range(s):
            total += alpha * x[idx.yplus(h, u)] + beta * x[idx.yminus(h, u)]
            for n, b in enumerate(hosp.room_beds):
                total += gamma * b * x[idx.z(h, n, u)]
                total += delta * b * (x[idx.v1(h, n, u)] + x[idx.v2(h, n, u)])
        for n, b in enumerate(hosp.room_beds):
            total += (s - 1) * gamma * b * x[idx.z(h, n, s - 1)]
    return total


def termwise_sp1_objective(ledger, scenarios, weights, x, idx):
    alpha, beta, gamma, delta, eps = weights.as_tuple()
    s, I = idx.horizon, idx.n_scenarios
    total = termwise_sp1_first_stage(ledger, weights, x, idx)
    for i in range(I):
        for h in range(ledger.n_hospitals):
            for u in range(1, s + 1):
                total += eps / I * x[idx.overbeds(i, h, u)]
            total += (s - 1) * eps / I * x[idx.overbeds(i, h, s)]
    return total


def feasible_point_sp2(capacity, scenarios, pmf, idx):
    s, I, H, J = idx.horizon, idx.n_scenarios, idx.n_hospitals, idx.truncation
    x = np.zeros(idx.n_vars)
    for j in range(1, J + 1):
        x[idx.w(j, 0)] = 1.0
    for i in range(I):
        for j in range(J + 1):
            for u in range(2, s + 1):
                x[idx.x(i, j, 0, u)] = scenarios.arrivals[i, u - 1]
            for h in range(H):
                for u in range(1, s + 1):
                    cum = scenarios.arrivals[i, 1:u].sum() if h == 0 else 0.0
                    w_cum = j if h == 0 else 0.0
                    occ = scenarios.occupancy[i, h, u - 1] + cum + w_cum
                    x[idx.occupancy(i, j, h, u)] = occ
                    x[idx.overbeds(i, j, h, u)] = max(0.0, occ - capacity[h, u - 1])
    return x


def termwise_sp2_objective(capacity, scenarios, pmf, x, idx):
    s, I, H, J = idx.horizon, idx.n_scenarios, idx.n_hospitals, idx.truncation
    p = pmf.probabilities
    total = 0.0
    for i in range(I):
        for j in range(J + 1):
            for h in range(H):
                for u in range(1, s + 1):
                    total += p[j] / I * x[idx.overbeds(i, j, h, u)]
    return total
