"""Acceptance suite: oracle checks plus the reduced-scale comparative study.

Each criterion prints one PASS line (visible with -s or in the captured
output).  The study criteria run the bundled three-hospital case at 25
replications x 50 scenarios x 91 days under common random numbers; the
runtime target in the criterion text assumes an 8-core desktop, so the
measured wall time and worker count are printed alongside.
"""

import json
import math
import os
import time
from dataclasses import replace

import numpy as np
import pytest
from scipy.stats import poisson

from conftest import (
    enumerate_milp_optimum,
    enumerate_sp1_optimum,
    random_small_milp,
    simulate_conditional_ward,
    simulate_infinite_server,
    total_variation_from_pmf,
)
from test_milp import (
    feasible_point_sp1,
    feasible_point_sp2,
    termwise_sp1_objective,
    termwise_sp2_objective,
)
from wardplan.config import bundled_config_path, study_from_json
from wardplan.forecasting import FractionEstimate, ewma_rate, update_fractions
from wardplan.milp import (
    CostWeights,
    HospitalRooms,
    RoomLedger,
    SP_B,
    SP_O,
    SP_R,
    build_sp1,
    build_sp2,
)
from wardplan.occupancy import (
    LosDistribution,
    RateCurve,
    WardRoster,
    conditional_expected_occupancy,
    kaplan_meier,
    offered_load,
    poisson_occupancy_pmf,
)
from wardplan.scenarios import AssignCountPmf, ScenarioSet, assign_count_pmf
from wardplan.simulator import REGION, RuleConfig, SimConfig, compare_rules
from wardplan.solver import solve_milp

GEO_MEAN4 = LosDistribution(knots=(0.0, 1.0), survival=(1.0, 0.75))


def _report(criterion, ok, detail):
    line = f"[ACCEPTANCE] {criterion}: {'PASS' if ok else 'FAIL'} ({detail})"
    print(line, flush=True)
    assert ok, line


class TestCriterion1OccupancyLaw:
    def test_occupancy_law(self):
        t0 = time.perf_counter()
        tau, lam, reps = 40, 3.0, 100_000
        rates = RateCurve((lam,) * tau)
        rho = offered_load(rates, GEO_MEAN4, tau)
        counts = simulate_infinite_server(rates.daily_rates, GEO_MEAN4, tau, reps, seed=2024)
        tv = total_variation_from_pmf(counts, lambda n: poisson_occupancy_pmf(rho, n), 70)

        ward = (0.5, 1.0, 1.0, 2.0, 4.0, 6.0, 6.0, 9.0)
        cond = conditional_expected_occupancy(
            WardRoster(attained_los=ward), rates, GEO_MEAN4, 0, 5
        )
        mc = simulate_conditional_ward(ward, rates.daily_rates, GEO_MEAN4, 0, 5, reps, seed=77)
        rel = abs(cond - mc.mean()) / mc.mean()
        elapsed = time.perf_counter() - t0
        _report(
            "occupancy-law",
            tv < 0.02 and rel < 0.02 and elapsed < 60.0,
            f"TV={tv:.4f} (<0.02), conditional rel err={rel:.4f} (<0.02), runtime={elapsed:.1f}s (<60s)",
        )


class TestCriterion2SolverExactness:
    def test_solver_exactness(self):
        t0 = time.perf_counter()
        mismatches = 0
        sizes = []
        for k in range(200):
            n = 3 + k % 7
            if k in (40, 90, 140):
                n = 10 + (k // 50) % 3  # a few 10-12 variable instances
            sizes.append(n)
            rng = np.random.default_rng(5000 + k)
            model = random_small_milp(rng, n, int(rng.integers(2, 16)))
            oracle_obj, _ = enumerate_milp_optimum(model)
            res = solve_milp(model, rel_gap=0.0)
            if oracle_obj is None:
                ok = res.status == "infeasible"
            else:
                ok = res.is_optimal and abs(res.objective - oracle_obj) <= 1e-8
            mismatches += 0 if ok else 1

        ledger = RoomLedger(
            hospitals=(
                HospitalRooms(4, (2, 3), (1, 0), (0, 1), (0, 0)),
            )
        )
        rng = np.random.default_rng(9)
        scen = ScenarioSet(
            horizon=3,
            occupancy=rng.integers(0, 9, (2, 1, 3)),
            arrivals=rng.integers(0, 4, (2, 3)),
            seed=0,
        )
        weights = CostWeights(2.0, 1.0, 1.0, 0.5, 10.0)
        model, _ = build_sp1(ledger, scen, weights)
        res = solve_milp(model, rel_gap=0.0)
        oracle = enumerate_sp1_optimum(ledger, scen, weights)
        sp1_ok = res.is_optimal and abs(res.objective - oracle) <= 1e-7
        elapsed = time.perf_counter() - t0
        _report(
            "solver-exactness",
            mismatches == 0 and sp1_ok and elapsed < 120.0,
            f"200 random MILPs (max {max(sizes)} vars): {mismatches} mismatches; "
            f"SP1 tiny |{res.objective:.6f}-{oracle:.6f}|<=1e-7; runtime={elapsed:.1f}s (<120s)",
        )


class TestCriterion3ModelFidelity:
    def test_model_fidelity(self):
        rng = np.random.default_rng(31)
        worst = 0.0
        for _ in range(20):
            ledger = RoomLedger(hospitals=tuple(_random_hospital(rng) for _ in range(int(rng.integers(1, 4)))))
            s = int(rng.integers(3, 6))
            I = int(rng.integers(1, 4))
            H = ledger.n_hospitals
            scen = ScenarioSet(
                horizon=s,
                occupancy=rng.integers(0, 14, (I, H, s)),
                arrivals=rng.integers(0, 5, (I, s)),
                seed=0,
            )
            w = CostWeights(2.0, 1.5, 1.0, 0.5, 9.0)
            model, idx = build_sp1(ledger, scen, w)
            x = feasible_point_sp1(ledger, scen, idx)
            worst = max(worst, model.max_violation(x))
            worst = max(
                worst, abs(model.evaluate(x) - termwise_sp1_objective(ledger, scen, w, x, idx))
            )
            capacity = np.asarray(rng.integers(3, 12, (H, s)), dtype=float)
            pmf = AssignCountPmf(
                rate=1.0, truncation=2, probabilities=(0.4, 0.35, 0.15)
            )
            m2, idx2 = build_sp2(capacity, scen, pmf)
            x2 = feasible_point_sp2(capacity, scen, pmf, idx2)
            worst = max(worst, m2.max_violation(x2))
            worst = max(
                worst, abs(m2.evaluate(x2) - termwise_sp2_objective(capacity, scen, pmf, x2, idx2))
            )

        # feasibility by construction on 50 random instances (o unbounded)
        feas_worst = 0.0
        for k in range(50):
            rng2 = np.random.default_rng(800 + k)
            H = int(rng2.integers(1, 4))
            hospitals = []
            for _h in range(H):
                nh = int(rng2.integers(1, 4))
                n_open = int(rng2.integers(0, nh + 1))
                open_prev = tuple(1 if i < n_open else 0 for i in range(nh))
                sched1 = tuple(
                    int(rng2.integers(0, 2)) if not open_prev[i] else 0 for i in range(nh)
                )
                sched2 = tuple(
                    int(rng2.integers(0, 2)) if not open_prev[i] and not sched1[i] else 0
                    for i in range(nh)
                )
                hospitals.append(
                    HospitalRooms(
                        int(rng2.integers(2, 12)),
                        tuple(int(b) for b in rng2.integers(1, 7, nh)),
                        open_prev,
                        sched1,
                        sched2,
                    )
                )
            ledger = RoomLedger(hospitals=tuple(hospitals))
            s = int(rng2.integers(3, 7))
            I = int(rng2.integers(1, 5))
            scen = ScenarioSet(
                horizon=s,
                occupancy=rng2.integers(0, 30, (I, H, s)),
                arrivals=rng2.integers(0, 9, (I, s)),
                seed=0,
            )
            model, idx = build_sp1(ledger, scen, SP_O)
            feas_worst = max(feas_worst, model.max_violation(feasible_point_sp1(ledger, scen, idx)))
        _report(
            "model-fidelity",
            worst <= 1e-9 and feas_worst <= 1e-6,
            f"worst term-wise/violation residual={worst:.2e} (<=1e-9); "
            f"50 constructed points max violation={feas_worst:.2e}",
        )


class TestCriterion4Estimators:
    def test_estimators(self):
        rng = np.random.default_rng(404)
        truth = np.array([0.15, 0.04, 0.04])
        est = FractionEstimate.from_priors((0.2, 0.05, 0.05))
        arrivals = 0
        while arrivals < 10_000:
            k = int(rng.poisson(6.0))
            arrivals += k
            u = rng.random(k)
            auto = [
                int(np.sum((u >= truth[:h].sum()) & (u < truth[: h + 1].sum())))
                for h in range(3)
            ]
            est = update_fractions(est, auto, k - sum(auto))
        frac_ok = np.allclose(est.fractions, truth, atol=0.02)

        km = kaplan_meier([(1.0, False), (2.0, False), (3.0, False)])
        km_ok = (
            km.survival_at(1.0) == pytest.approx(2 / 3)
            and km.survival_at(2.0) == pytest.approx(1 / 3)
            and km.survival_at(3.0) == 0.0
        )
        km2 = kaplan_meier([(5.0, True)] * 10 + [(2.0, False)])
        km_ok = km_ok and km2.survival_at(2.0) == pytest.approx(10 / 11) and km2.survival_at(4.5) == pytest.approx(10 / 11)

        ewma_ok = (
            ewma_rate([0.0, 10.0], 0.1) == pytest.approx(1.0)
            and ewma_rate([3.0] * 6, 0.1) == pytest.approx(3.0)
            and ewma_rate([4.0, 9.0, 2.0], 1.0) == 2.0
        )
        pmf = assign_count_pmf(4.0)
        pmf_ok = pmf.truncation == 8 and poisson.cdf(7, 4.0) < 0.975 <= poisson.cdf(8, 4.0)
        _report(
            "estimators",
            frac_ok and km_ok and ewma_ok and pmf_ok,
            f"f-hat={tuple(round(f, 4) for f in est.fractions)} within +-0.02 of (0.15,0.04,0.04); "
            f"KM exact; EWMA exact; J(4)={pmf.truncation}==8",
        )


REDUCED_REPS = 25
REDUCED_SCEN = 50


@pytest.fixture(scope="session")
def study_report():
    """One common-random-number run of every configuration both study
    criteria need; by far the dominant cost of the suite."""
    doc = json.loads(bundled_config_path().read_text())
    base = replace(
        study_from_json(doc), replications=REDUCED_REPS, scenarios_per_day=REDUCED_SCEN
    )
    margins = (3.0, 2.0, 2.0)
    configs = [
        replace(base, rule=RuleConfig(kind="IH", margins=margins, name="IH")),
        replace(base, rule=RuleConfig(kind="PU", margins=margins, name="PU")),
        replace(base, rule=RuleConfig(kind="SP", weights=SP_O, name="SP-O")),
        replace(base, rule=RuleConfig(kind="SP", weights=SP_B, name="SP-B")),
        replace(base, rule=RuleConfig(kind="SP", weights=SP_R, name="SP-R")),
        replace(base, rule=RuleConfig(kind="SP_DET", weights=SP_O, statistic="median", name="SP-DET-MED")),
        replace(base, rule=RuleConfig(kind="IH", margins=margins, quantile=0.80, name="IH@80")),
        replace(base, rule=RuleConfig(kind="IH", margins=margins, quantile=0.85, name="IH@85")),
        replace(base, rule=RuleConfig(kind="IH", margins=margins, quantile=0.95, name="IH@95")),
        replace(base, rule=RuleConfig(kind="SP", weights=SP_O, name="SP-O-H3"), lookahead=3),
        replace(
            base,
            rule=RuleConfig(kind="SP", weights=SP_O, name="SP-O-I100"),
            scenarios_per_day=100,
        ),
    ]
    t0 = time.perf_counter()
    done = [0]

    def tick(_rep):
        done[0] += 1
        print(f"[study] replication {done[0]}/{REDUCED_REPS}", flush=True)

    report = compare_rules(configs, progress=tick)
    elapsed = time.perf_counter() - t0
    workers = os.environ.get("WARDPLAN_THREADS") or os.cpu_count()
    print(
        f"[study] total wall time {elapsed / 60:.1f} min on {workers} workers "
        f"(criterion target: <30 min on an 8-core desktop)",
        flush=True,
    )
    return report


def _significant(report, label_a, label_b, kpi):
    """Non-overlapping 95% CIs, or the paired-delta CI excluding zero."""
    ta, tb = report.table(label_a), report.table(label_b)
    ma, ha = ta.rows[(REGION, kpi)]
    mb, hb = tb.rows[(REGION, kpi)]
    non_overlap = (ma + ha < mb - hb) or (mb + hb < ma - ha)
    dm, dh = report.delta(label_a, label_b, REGION, kpi)
    paired = (dm + dh < 0.0) or (dm - dh > 0.0)
    return non_overlap or paired


class TestCriterion5DirectionalStudy:
    def test_directional_reproduction(self, study_report):
        r = study_report
        m = lambda label, kpi: r.table(label).mean(REGION, kpi)
        checks = []
        checks.append(("SP-O overbeds < IH", m("SP-O", "overbeds") < m("IH", "overbeds")
                       and _significant(r, "SP-O", "IH", "overbeds")))
        checks.append(("SP-O overbeds < PU", m("SP-O", "overbeds") < m("PU", "overbeds")
                       and _significant(r, "SP-O", "PU", "overbeds")))
        checks.append(("SP-B beds used < IH", m("SP-B", "reg_beds_used") < m("IH", "reg_beds_used")
                       and _significant(r, "SP-B", "IH", "reg_beds_used")))
        others = ("IH", "PU", "SP-O", "SP-B")
        min_ok = all(
            m("SP-R", "rooms_added_removed") < m(o, "rooms_added_removed") for o in others
        )
        min_sig = all(_significant(r, "SP-R", o, "rooms_added_removed") for o in others)
        checks.append(("SP-R room changes minimal", min_ok and min_sig))
        det_ok = m("SP-DET-MED", "overbeds") > 2.0 * m("SP-O", "overbeds")
        checks.append(
            ("median collapse > 2x SP-O overbeds", det_ok and _significant(r, "SP-DET-MED", "SP-O", "overbeds"))
        )
        checks.append(
            ("PU room changes < IH (point)", m("PU", "rooms_added_removed") < m("IH", "rooms_added_removed"))
        )
        detail = "; ".join(f"{name}={'ok' if ok else 'FAIL'}" for name, ok in checks)
        summary = (
            f"overbeds IH={m('IH','overbeds'):.3f} PU={m('PU','overbeds'):.3f} "
            f"SP-O={m('SP-O','overbeds'):.3f} DET={m('SP-DET-MED','overbeds'):.3f}; "
            f"beds IH={m('IH','reg_beds_used'):.2f} SP-B={m('SP-B','reg_beds_used'):.2f}; "
            f"rooms IH={m('IH','rooms_added_removed'):.3f} PU={m('PU','rooms_added_removed'):.3f} "
            f"SP-R={m('SP-R','rooms_added_removed'):.3f}"
        )
        _report("directional-study", all(ok for _n, ok in checks), detail + " | " + summary)


class TestCriterion6SensitivityMechanics:
    def test_quantile_monotonicity(self, study_report):
        r = study_report
        labels = ["IH@80", "IH@85", "IH", "IH@95"]
        over = [r.table(l).mean(REGION, "overbeds") for l in labels]
        under = [r.table(l).mean(REGION, "underbeds") for l in labels]
        over_ok = all(over[i] >= over[i + 1] - 1e-12 for i in range(3))
        under_ok = all(under[i] <= under[i + 1] + 1e-12 for i in range(3))
        _report(
            "sensitivity-quantile",
            over_ok and under_ok,
            f"overbeds {[round(v, 3) for v in over]} non-increasing; "
            f"underbeds {[round(v, 3) for v in under]} non-decreasing",
        )

    def test_horizon_direction(self, study_report):
        r = study_report
        over3 = r.table("SP-O-H3").mean(REGION, "overbeds")
        over5 = r.table("SP-O").mean(REGION, "overbeds")
        beds3 = r.table("SP-O-H3").mean(REGION, "reg_beds_used")
        beds5 = r.table("SP-O").mean(REGION, "reg_beds_used")
        _report(
            "sensitivity-horizon",
            over3 > over5 and beds3 < beds5,
            f"overbeds h3={over3:.3f} > h5={over5:.3f}; beds used h3={beds3:.2f} < h5={beds5:.2f}",
        )

    def test_scenario_count_stabilises(self, study_report):
        r = study_report
        m50 = r.table("SP-O").mean(REGION, "avg_cost_SP-O")
        t100 = r.table("SP-O-I100")
        m100, hw100 = t100.rows[(REGION, "avg_cost_SP-O")]
        _report(
            "sensitivity-scenario-count",
            abs(m100 - m50) <= hw100,
            f"|{m100:.3f} - {m50:.3f}| = {abs(m100 - m50):.3f} <= half-width {hw100:.3f}",
        )


def _random_hospital(rng) -> HospitalRooms:
    nh = int(rng.integers(1, 4))
    n_open = int(rng.integers(0, nh + 1))
    open_prev = tuple(1 if i < n_open else 0 for i in range(nh))
    sched1 = tuple(int(rng.integers(0, 2)) if not open_prev[i] else 0 for i in range(nh))
    sched2 = tuple(
        int(rng.integers(0, 2)) if not open_prev[i] and not sched1[i] else 0 for i in range(nh)
    )
    return HospitalRooms(
        int(rng.integers(2, 10)),
        tuple(int(b) for b in rng.integers(1, 6, nh)),
        open_prev,
        sched1,
        sched2,
    )
