"""Shared brute-force oracles used by unit and acceptance tests.

These stay deliberately independent of the library's quadrature /
optimization code paths: they sample every arrival and length of stay
explicitly, or enumerate candidate solutions exhaustively.
"""

from __future__ import annotations

import numpy as np


def simulate_infinite_server(rates, los, tau, reps, seed):
    """Counts at day ``tau`` of an infinite-server queue started empty.

    Every arrival is sampled individually (uniform instant within its day,
    iid LoS draw); a patient is counted when its departure instant lies
    beyond ``tau``.  Returns an int array of shape (reps,).
    """
    rng = np.random.default_rng(seed)
    counts = np.zeros(reps, dtype=int)
    daily = np.asarray(rates, dtype=float)[:tau]
    for day, lam in enumerate(daily):
        if lam == 0.0:
            continue
        k = rng.poisson(lam, reps)
        total = int(k.sum())
        if total == 0:
            continue
        rep_ids = np.repeat(np.arange(reps), k)
        instants = day + rng.random(total)
        stays = los.sample(rng, total)
        survived = instants + stays > tau
        counts += np.bincount(rep_ids[survived], minlength=reps)
    return counts


def simulate_conditional_ward(attained, rates, los, tau, sigma, reps, seed):
    """Ward occupancy ``sigma`` days after ``tau`` given residents' attained LoS.

    Residents' remaining stays are sampled by rejection from the full LoS
    distribution (draw until the stay exceeds the attained LoS), keeping the
    oracle independent of any conditional-survival formula.  New arrivals in
    the window are simulated like ``simulate_infinite_server``.
    """
    rng = np.random.default_rng(seed)
    counts = np.zeros(reps, dtype=int)
    for ell in attained:
        stays = np.full(reps, -1.0)
        pending = np.arange(reps)
        while pending.size:
            draw = los.sample(rng, pending.size)
            ok = draw > ell
            stays[pending[ok]] = draw[ok]
            pending = pending[~ok]
        counts += (stays > ell + sigma).astype(int)
    window = np.asarray(rates, dtype=float)[tau : tau + sigma]
    for offset, lam in enumerate(window):
        if lam == 0.0:
            continue
        k = rng.poisson(lam, reps)
        total = int(k.sum())
        if total == 0:
            continue
        rep_ids = np.repeat(np.arange(reps), k)
        instants = offset + rng.random(total)
        stays = los.sample(rng, total)
        survived = instants + stays > sigma
        counts += np.bincount(rep_ids[survived], minlength=reps)
    return counts


def total_variation_from_pmf(samples, pmf, support_max):
    """TV distance between an empirical sample and a pmf on 0..support_max."""
    samples = np.asarray(samples)
    emp = np.bincount(np.clip(samples, 0, support_max), minlength=support_max + 1)
    emp = emp / len(samples)
    theo = np.array([pmf(n) for n in range(support_max + 1)])
    residual = max(0.0, 1.0 - theo.sum())
    return 0.5 * (np.abs(emp - theo).sum() + residual)


def enumerate_milp_optimum(model, chunk=1 << 18):
    """Exhaustive optimum of an all-integer MILP with finite bounds.

    Walks the full integer grid in mixed-radix chunks and checks every
    constraint directly.  Returns (objective, point) or (None, None) when
    infeasible.  Intended for models of at most ~4**12 candidate points.
    """
    lb = model.lb.astype(np.int64)
    ub = model.ub.astype(np.int64)
    sizes = (ub - lb + 1).astype(np.int64)
    total = int(np.prod(sizes))
    n = model.n_vars
    dense = model.matrix.toarray()
    best_obj, best_x = None, None
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total), dtype=np.int64)
        X = np.empty((len(idx), n), dtype=np.int64)
        rem = idx.copy()
        for j in range(n - 1, -1, -1):
            X[:, j] = lb[j] + rem % sizes[j]
            rem //= sizes[j]
        lhs = X @ dense.T
        ok = np.ones(len(idx), dtype=bool)
        for r in range(model.n_cons):
            s = model.senses[r]
            if s == "<":
                ok &= lhs[:, r] <= model.rhs[r] + 1e-9
            elif s == ">":
                ok &= lhs[:, r] >= model.rhs[r] - 1e-9
            else:
                ok &= np.abs(lhs[:, r] - model.rhs[r]) <= 1e-9
        if not ok.any():
            continue
        objs = X[ok] @ model.objective + model.offset
        k = int(np.argmin(objs))
        if best_obj is None or objs[k] < best_obj:
            best_obj = float(objs[k])
            best_x = X[ok][k].copy()
    return best_obj, best_x


def random_small_milp(rng, n_vars, n_cons):
    """Random all-integer model with bounds [0, 3] for oracle comparison."""
    from wardplan.milp import ModelBuilder

    b = ModelBuilder()
    for j in range(n_vars):
        b.add_var(0.0, 3.0, "I", name=f"v{j}", obj=float(rng.integers(-5, 6)))
    for r in range(n_cons):
        nz = rng.choice(n_vars, size=min(n_vars, int(rng.integers(1, 5))), replace=False)
        coefs = rng.integers(-4, 5, size=len(nz))
        sense = rng.choice(["<", ">", "="], p=[0.5, 0.3, 0.2])
        anchor = rng.integers(0, 4, size=n_vars)  # keeps many instances feasible
        rhs = float(coefs @ anchor[nz] + rng.integers(-2, 3))
        b.add_constraint([(int(j), float(c)) for j, c in zip(nz, coefs)], sense, rhs)
    return b.build()


def _sp1_second_stage_lp(capacity, occupancy, arrivals, eps_weights):
    """Route one scenario's arrivals to minimise weighted overbeds (LP)."""
    from scipy.optimize import linprog as _lp

    H, s = occupancy.shape
    # variables: x[h, u] then o[h, u]
    n = 2 * H * s
    c = np.concatenate([np.zeros(H * s), np.repeat(eps_weights[None, :], H, axis=0).ravel()])
    a_eq = np.zeros((s, n))
    for u in range(s):
        for h in range(H):
            a_eq[u, h * s + u] = 1.0
    b_eq = arrivals.astype(float)
    rows = []
    rhs = []
    for h in range(H):
        for u in range(s):
            row = np.zeros(n)
            for l in range(u + 1):
                row[h * s + l] = 1.0
            row[H * s + h * s + u] = -1.0
            rows.append(row)
            rhs.append(float(capacity[h, u] - occupancy[h, u]))
    res = _lp(c, A_ub=np.asarray(rows), b_ub=np.asarray(rhs), A_eq=a_eq, b_eq=b_eq, method="highs")
    assert res.status == 0
    return float(res.fun)


def enumerate_sp1_optimum(ledger, scenarios, weights):
    """Brute-force SP1: every feasible first-stage room path, second stage by LP.

    Room paths are prefix counts per day; preparation flags take their
    cheapest feasible assignment (fresh two-day chains), which is optimal
    because reserved beds only cost money.
    """
    import itertools

    s = scenarios.horizon
    I = scenarios.count
    alpha, beta, gamma, delta, eps = weights.as_tuple()

    def hospital_paths(h):
        hosp = ledger.hospitals[h]
        nh = hosp.n_rooms
        m_prev = hosp.open_count
        ready = [hosp.open_prev[n] + hosp.sched1_prev[n] for n in range(nh)]
        ready2 = [
            hosp.open_prev[n] + hosp.sched1_prev[n] + hosp.sched2_prev[n] for n in range(nh)
        ]
        paths = []
        for path in itertools.product(range(nh + 1), repeat=s):
            ok = True
            hist = (m_prev,) + path
            for u in range(s):
                m = path[u]
                # next-day reopen ban
                if u + 1 < s and hist[u] > m and path[u + 1] > m:
                    ok = False
                    break
                # openings need yesterday's preparation state
                if u == 0 and m > 0 and any(not ready[n] for n in range(m)):
                    ok = False
                    break
                if u == 1 and m > 0 and any(not ready2[n] for n in range(m)):
                    ok = False
                    break
            if ok:
                paths.append(path)
        return paths

    def first_stage_cost(h, path):
        hosp = ledger.hospitals[h]
        beds = hosp.room_beds
        hist = (hosp.open_count,) + path
        cost = 0.0
        for u in range(s):
            opens = max(hist[u + 1] - hist[u], 0)
            closes = max(hist[u] - hist[u + 1], 0)
            cost += alpha * opens + beta * closes
            cost += gamma * sum(beds[: hist[u + 1]])
            if u == s - 1:
                cost += (s - 1) * gamma * sum(beds[: hist[u + 1]])
        # cheapest preparation flags: opening on day u needs v1 on day u-1
        # (one reserved day) and, for u >= 2, also v2 on day u-2
        for u in range(s):
            for n in range(hist[u], hist[u + 1]):
                if u == 1:
                    cost += delta * beds[n]
                elif u >= 2:
                    cost += 2 * delta * beds[n]
        return cost

    H = ledger.n_hospitals
    eps_weights = np.full(s, eps)
    eps_weights[s - 1] *= s
    best = None
    all_paths = [hospital_paths(h) for h in range(H)]
    for combo in itertools.product(*all_paths):
        cost = sum(first_stage_cost(h, combo[h]) for h in range(H))
        capacity = np.zeros((H, s))
        for h in range(H):
            hosp = ledger.hospitals[h]
            for u in range(s):
                capacity[h, u] = hosp.standard_capacity + sum(hosp.room_beds[: combo[h][u]])
        second = 0.0
        for i in range(I):
            second += _sp1_second_stage_lp(
                capacity, scenarios.occupancy[i].astype(float), scenarios.arrivals[i], eps_weights
            )
        total = cost + second / I
        if best is None or total < best:
            best = total
    return best
