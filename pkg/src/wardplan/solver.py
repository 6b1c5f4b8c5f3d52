"""Exact MILP solving: LP relaxations plus best-bound branch-and-bound.

``solve_lp`` produces an optimal basic solution of the LP relaxation.  Small
models go through the in-repo bounded-variable two-phase primal simplex
(Dantzig pricing with a Bland's-rule fallback after degenerate stalls, so
termination is guaranteed); large models are delegated to HiGHS via scipy
behind the same contract, purely for speed.

``solve_milp`` wraps branch-and-bound around the relaxation: a depth-first
dive supplies the first incumbent, then best-bound node selection with
most-fractional branching over the variables declared binary/integer
(ties by lowest variable id).  Everything is deterministic for a given
model.
"""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .milp import BINARY, CONTINUOUS, EQ, GE, INTEGER, LE, MilpModel

FEAS_TOL = 1e-7
INT_TOL = 1e-6
SIMPLEX_CELL_LIMIT = 4_000  # m * n above which the HiGHS backend takes over


@dataclass(frozen=True)
class LpSolution:
    values: np.ndarray | None
    objective: float
    status: str  # optimal | infeasible | unbounded

    @property
    def is_optimal(self) -> bool:
        return self.status == "optimal"


@dataclass(frozen=True)
class MilpResult:
    values: np.ndarray | None
    objective: float
    bound: float
    gap: float
    node_count: int
    status: str  # optimal | gap_reached | node_limit | time_limit | infeasible

    @property
    def is_optimal(self) -> bool:
        return self.status == "optimal"


def _highs_forms(model: MilpModel):
    cached = getattr(model, "_highs_forms_cache", None)
    if cached is not None:
        return cached
    le = model.senses == LE
    ge = model.senses == GE
    eq = model.senses == EQ
    csr = model.matrix
    blocks_ub, rhs_ub = [], []
    if le.any():
        blocks_ub.append(csr[le])
        rhs_ub.append(model.rhs[le])
    if ge.any():
        blocks_ub.append(-csr[ge])
        rhs_ub.append(-model.rhs[ge])
    a_ub = sp.vstack(blocks_ub, format="csr") if blocks_ub else None
    b_ub = np.concatenate(rhs_ub) if rhs_ub else None
    a_eq = csr[eq] if eq.any() else None
    b_eq = model.rhs[eq] if eq.any() else None
    forms = (a_ub, b_ub, a_eq, b_eq)
    object.__setattr__(model, "_highs_forms_cache", forms)
    return forms


def _solve_highs(model: MilpModel, lb, ub) -> LpSolution:
    a_ub, b_ub, a_eq, b_eq = _highs_forms(model)
    res = linprog(
        model.objective,
        A_ub=a_ub,
        b_ub=b_ub,
        A_eq=a_eq,
        b_eq=b_eq,
        bounds=np.column_stack([lb, ub]),
        method="highs-ds",
    )
    if res.status == 0:
        return LpSolution(values=np.asarray(res.x), objective=float(res.fun) + model.offset, status="optimal")
    if res.status == 2:
        return LpSolution(values=None, objective=math.inf, status="infeasible")
    if res.status == 3:
        return LpSolution(values=None, objective=-math.inf, status="unbounded")
    raise RuntimeError(f"LP backend failed: {res.message}")


def _solve_simplex(model: MilpModel, lb, ub) -> LpSolution:
    try:
        status, x, _ = _bounded_simplex(
            model.objective,
            model.matrix.toarray(),
            model.senses,
            model.rhs,
            np.asarray(lb, dtype=float),
            np.asarray(ub, dtype=float),
        )
    except RuntimeError:
        # iteration safety valve: hand numerically nasty instances to HiGHS
        return _solve_highs(model, lb, ub)
    if status != "optimal":
        return LpSolution(values=None, objective=math.inf if status == "infeasible" else -math.inf, status=status)
    obj = float(model.objective @ x) + model.offset
    return LpSolution(values=x, objective=obj, status="optimal")


def _bounded_simplex(c, A, senses, rhs, lb, ub, max_iter=None):
    """Two-phase primal simplex for min c'x, Ax {<=,=} b, lb <= x <= ub.

    Returns (status, x, iterations).  GE rows are negated to LE up front;
    slack variables close the rows; artificials patch rows whose slack
    cannot absorb the initial residual.  Pricing switches permanently to
    Bland's rule (which cannot cycle) after a run of degenerate pivots or
    once the iteration count outgrows the instance size.
    """
    A = np.asarray(A, dtype=float).copy()
    rhs = np.asarray(rhs, dtype=float).copy()
    m, n = A.shape
    if max_iter is None:
        max_iter = max(3000, 40 * (m + n))
    for i in range(m):
        if senses[i] == GE:
            A[i] *= -1.0
            rhs[i] *= -1.0
    is_eq = np.asarray([s == EQ for s in senses])

    n_slack = m
    total = n + n_slack
    full = np.hstack([A, np.eye(m)])
    lo = np.concatenate([lb, np.zeros(m)])
    hi = np.concatenate([ub, np.where(is_eq, 0.0, np.inf)])

    # nonbasic structurals start at their (finite) lower bound
    x_n = lo[:n].copy()
    resid = rhs - A @ x_n
    art_sign = np.zeros(m)
    need_art = np.zeros(m, dtype=bool)
    for i in range(m):
        if is_eq[i]:
            if abs(resid[i]) > 1e-12:
                need_art[i] = True
        else:
            if resid[i] < -1e-12:
                need_art[i] = True
    art_cols = np.nonzero(need_art)[0]
    n_art = len(art_cols)
    if n_art:
        art_mat = np.zeros((m, n_art))
        for k, i in enumerate(art_cols):
            art_mat[i, k] = 1.0 if resid[i] >= 0 else -1.0
        full = np.hstack([full, art_mat])
        lo = np.concatenate([lo, np.zeros(n_art)])
        hi = np.concatenate([hi, np.full(n_art, np.inf)])
    grand = total + n_art

    basis = np.empty(m, dtype=np.int64)
    at_upper = np.zeros(grand, dtype=bool)
    x_b = np.empty(m)
    art_of_row = {}
    for i in range(m):
        if need_art[i]:
            k = int(np.nonzero(art_cols == i)[0][0])
            basis[i] = total + k
            x_b[i] = abs(resid[i])
        else:
            basis[i] = n + i
            x_b[i] = resid[i]

    # tableau T = B^-1 * full; initial basis is diagonal +-1
    T = full.copy()
    for i in range(m):
        if need_art[i] and resid[i] < 0:
            T[i] *= -1.0
    rhs_t = x_b.copy()

    in_basis = np.zeros(grand, dtype=bool)
    in_basis[basis] = True

    def run_phase(cost, eligible, max_iter):
        nonlocal T, x_b, basis, at_upper, in_basis
        stalls = 0
        bland = False
        bland_after = max(200, 8 * (m + n))
        for it in range(max_iter):
            if it >= bland_after:
                bland = True
            c_b = cost[basis]
            d = cost - c_b @ T
            cand_lo = eligible & ~in_basis & ~at_upper & (d < -1e-9)
            cand_hi = eligible & ~in_basis & at_upper & (d > 1e-9)
            cand = cand_lo | cand_hi
            if not cand.any():
                return "optimal", it
            choices = np.nonzero(cand)[0]
            if bland:
                j = int(choices[0])
            else:
                j = int(choices[np.argmax(np.abs(d[choices]))])
            sigma = -1.0 if at_upper[j] else 1.0
            col = T[:, j]
            move = -sigma * col  # basic values change by move * t
            t_best = hi[j] - lo[j]  # bound flip
            leave = -1
            leave_to_upper = False
            for i in range(m):
                mi = move[i]
                if mi < -1e-11:
                    room = x_b[i] - lo[basis[i]]
                    ti = room / -mi
                    if ti < t_best - 1e-12 or (
                        abs(ti - t_best) <= 1e-12 and (leave == -1 or basis[i] < basis[leave])
                    ):
                        t_best, leave, leave_to_upper = ti, i, False
                elif mi > 1e-11:
                    room = hi[basis[i]] - x_b[i]
                    if not np.isfinite(room):
                        continue
                    ti = room / mi
                    if ti < t_best - 1e-12 or (
                        abs(ti - t_best) <= 1e-12 and (leave == -1 or basis[i] < basis[leave])
                    ):
                        t_best, leave, leave_to_upper = ti, i, True
            if not np.isfinite(t_best):
                return "unbounded", it
            t_best = max(t_best, 0.0)
            if t_best <= 1e-12:
                stalls += 1
                if stalls > 40:
                    bland = True  # sticky: Bland's rule cannot cycle
            else:
                stalls = 0
            x_b += move * t_best
            if leave == -1:
                at_upper[j] = ~at_upper[j]
                continue
            enter_val = (hi[j] if at_upper[j] else lo[j]) + sigma * t_best
            lv = basis[leave]
            in_basis[lv] = False
            at_upper[lv] = leave_to_upper
            basis[leave] = j
            in_basis[j] = True
            piv = T[leave, j]
            T[leave] = T[leave] / piv
            col2 = T[:, j].copy()
            col2[leave] = 0.0
            T -= np.outer(col2, T[leave])
            x_b[leave] = enter_val
        return "iteration_limit", max_iter

    eligible = np.ones(grand, dtype=bool)
    if n_art:
        cost1 = np.zeros(grand)
        cost1[total:] = 1.0
        status, _ = run_phase(cost1, eligible, max_iter)
        if status == "iteration_limit":
            raise RuntimeError("simplex phase 1 hit the iteration limit")
        if float(cost1[basis] @ x_b) > 1e-7:
            return "infeasible", None, 0
        hi[total:] = 0.0  # lock artificials at zero
        eligible[total:] = False
    cost2 = np.concatenate([np.asarray(c, dtype=float), np.zeros(grand - n)])
    status, iters = run_phase(cost2, eligible, max_iter)
    if status == "iteration_limit":
        raise RuntimeError("simplex phase 2 hit the iteration limit")
    if status == "unbounded":
        return "unbounded", None, iters

    x = np.empty(grand)
    x[~in_basis & at_upper] = hi[~in_basis & at_upper]
    x[~in_basis & ~at_upper] = lo[~in_basis & ~at_upper]
    x[basis] = x_b
    x_struct = np.clip(x[:n], lb, ub)
    return "optimal", x_struct, iters


def solve_lp(model: MilpModel, lb=None, ub=None, backend: str | None = None) -> LpSolution:
    """Optimal basic solution of the model's LP relaxation.

    ``lb``/``ub`` override the model bounds (used by branch-and-bound);
    integrality declarations are ignored.  ``backend`` forces "simplex" or
    "highs"; by default small models use the in-repo simplex.
    """
    lb = model.lb if lb is None else lb
    ub = model.ub if ub is None else ub
    if backend is None:
        cells = model.n_cons * model.n_vars
        backend = "simplex" if cells <= SIMPLEX_CELL_LIMIT else "highs"
    if backend == "simplex":
        return _solve_simplex(model, lb, ub)
    if backend == "highs":
        return _solve_highs(model, lb, ub)
    raise ValueError(f"unknown backend {backend!r}")


def _check_warm_start(model: MilpModel, point, int_idx) -> float | None:
    x = np.asarray(point, dtype=float)
    if x.shape != (model.n_vars,):
        return None
    if np.any(np.abs(x[int_idx] - np.round(x[int_idx])) > INT_TOL):
        return None
    if model.max_violation(x) > 1e-6:
        return None
    return model.evaluate(x)


def solve_milp(
    model: MilpModel,
    rel_gap: float = 1e-4,
    node_limit: int | None = None,
    time_limit: float | None = None,
    warm_start=None,
    lp_backend: str | None = None,
) -> MilpResult:
    """Branch-and-bound to the requested relative gap (default 1e-4).

    Node selection is best-bound after an initial depth-first dive finds the
    first incumbent; branching picks the most fractional binary/integer
    variable, ties to the lowest id.  ``warm_start`` may supply a feasible
    point used as the initial incumbent.  Deterministic for a given model.
    """
    kinds = model.kinds
    int_idx = np.nonzero((kinds == BINARY) | (kinds == INTEGER))[0]
    scale = lambda v: max(1.0, abs(v))
    deadline = None if time_limit is None else time.monotonic() + time_limit

    inc_x = None
    inc_obj = math.inf
    dive_active = True  # dive until the tree itself yields an integral point
    if warm_start is not None:
        val = _check_warm_start(model, warm_start, int_idx)
        if val is not None:
            inc_x = np.asarray(warm_start, dtype=float).copy()
            inc_obj = val

    root_lp = solve_lp(model, backend=lp_backend)
    if root_lp.status == "infeasible":
        return MilpResult(None, math.inf, math.inf, math.nan, 0, "infeasible")
    if root_lp.status == "unbounded":
        raise ValueError("MILP relaxation is unbounded")

    # node: (parent_bound, seq, branch chain); chain entries (var, lo, hi)
    seq = 0
    heap: list = []
    dive: list = []
    node_count = 0
    best_bound = root_lp.objective

    def materialise(chain):
        lb = model.lb.copy()
        ub = model.ub.copy()
        for j, lo_v, hi_v in chain:
            lb[j] = max(lb[j], lo_v)
            ub[j] = min(ub[j], hi_v)
        return lb, ub

    current = (root_lp.objective, -1, ())
    current_lp = root_lp

    while True:
        parent_bound, _, chain = current
        lp = current_lp
        if lp is None:
            lb, ub = materialise(chain)
            lp = solve_lp(model, lb, ub, backend=lp_backend)
            node_count += 1
        prune = False
        if lp.status == "infeasible":
            prune = True
        elif lp.objective >= inc_obj - 1e-9 * scale(inc_obj):
            prune = True
        else:
            vals = lp.values[int_idx]
            frac = np.abs(vals - np.round(vals))
            frac_pos = frac > INT_TOL
            if not frac_pos.any():
                snapped = lp.values.copy()
                snapped[int_idx] = np.round(vals)
                obj = model.evaluate(snapped)
                if obj < inc_obj:
                    inc_obj, inc_x = obj, snapped
                prune = True
                dive_active = False
            else:
                dist = np.minimum(frac, 1.0 - frac)
                dist[~frac_pos] = -1.0
                pick = int(np.argmax(dist))
                j = int(int_idx[pick])
                v = float(lp.values[j])
                lo_child = (j, math.floor(v) + 1.0, math.inf)
                hi_child = (j, -math.inf, math.floor(v))
                near_up = (v - math.floor(v)) >= 0.5
                near = lo_child if near_up else hi_child
                far = hi_child if near_up else lo_child
                for child, to_dive in ((far, False), (near, dive_active)):
                    jj, lo_v, hi_v = child
                    entry = (lp.objective, seq, chain + ((jj, lo_v, hi_v),))
                    seq += 1
                    if to_dive:
                        dive.append(entry)
                    else:
                        heapq.heappush(heap, entry)

        # update the running bound (monotone non-decreasing); heap[0] is the
        # open minimum, the dive stack is short enough to scan
        candidates = ([heap[0][0]] if heap else []) + [d[0] for d in dive]
        open_bound = min(candidates) if candidates else inc_obj
        best_bound = max(best_bound, min(open_bound, inc_obj))

        limit_status = None
        if node_limit is not None and node_count >= node_limit:
            limit_status = "node_limit"
        if deadline is not None and time.monotonic() > deadline:
            limit_status = "time_limit"
        gap = (
            (inc_obj - best_bound) / scale(inc_obj)
            if inc_x is not None and math.isfinite(inc_obj)
            else math.inf
        )
        if inc_x is not None and gap <= rel_gap:
            done = not heap and not dive
            status = "optimal" if (done or gap <= 1e-12) else "gap_reached"
            return MilpResult(inc_x, inc_obj, best_bound, max(gap, 0.0), node_count, status)
        if limit_status is not None:
            return MilpResult(inc_x, inc_obj, best_bound, gap, node_count, limit_status)
        if not heap and not dive:
            if inc_x is None:
                return MilpResult(None, math.inf, math.inf, math.nan, node_count, "infeasible")
            return MilpResult(inc_x, inc_obj, inc_obj, 0.0, node_count, "optimal")

        if dive_active and dive:
            current = dive.pop()
        else:
            while dive:
                heapq.heappush(heap, dive.pop())
            current = heapq.heappop(heap)
            if current[0] >= inc_obj - 1e-9 * scale(inc_obj):
                # everything left is at least as bad
                best_bound = max(best_bound, min(current[0], inc_obj))
                return MilpResult(inc_x, inc_obj, best_bound, max((inc_obj - best_bound) / scale(inc_obj), 0.0), node_count, "optimal")
        current_lp = None
