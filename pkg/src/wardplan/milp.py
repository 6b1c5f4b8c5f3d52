"""Solver-agnostic MILP representation and the SP1/SP2 compilers.

``MilpModel`` stores variables (bounds + kind), linear constraints in CSR
form, and a minimization objective.  ``build_sp1`` compiles the room
opening/closing program (first stage: which rooms are open or scheduled
over the lookahead; second stage: scenario-wise patient routing, occupancy
and overbeds).  ``build_sp2`` compiles the patient-assignment program that
takes SP1's capacity schedule as data.  Decoders turn integral solutions
back into plans and validate the room-sequencing invariants.

Only the open-room indicators (z) and assignment counts (x, w) are declared
integral in the compiled models.  Every other printed integer is provably
integral at any optimum once those are: occupancy N is pinned by its
defining equality, positive overbed costs pin o at max(0, N - C), strictly
positive reserved-bed costs pin the scheduling flags v at the minimal 0/1
chains a z-path needs, and positive open/close costs pin y at the positive
and negative parts of the room-count deltas.  Declaring them continuous
keeps branch-and-bound trees over the genuinely combinatorial variables;
the decoders validate integrality and round overbeds up.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .scenarios import AssignCountPmf, ScenarioSet

LE, EQ, GE = "<", "=", ">"

BINARY, INTEGER, CONTINUOUS = "B", "I", "C"


@dataclass(frozen=True)
class MilpModel:
    """Minimization MILP: bounds, kinds, CSR constraints, linear objective."""

    lb: np.ndarray
    ub: np.ndarray
    kinds: np.ndarray  # '<U1' array of B/I/C
    matrix: sp.csr_matrix
    senses: np.ndarray  # '<U1' array of <, =, >
    rhs: np.ndarray
    objective: np.ndarray
    offset: float = 0.0
    names: tuple[str, ...] | None = None

    def __post_init__(self):
        lb = np.asarray(self.lb, dtype=float)
        ub = np.asarray(self.ub, dtype=float)
        obj = np.asarray(self.objective, dtype=float)
        n = len(lb)
        if not (len(ub) == len(self.kinds) == len(obj) == n):
            raise ValueError("variable arrays disagree in length")
        if np.any(~np.isfinite(lb)):
            raise ValueError("lower bounds must be finite")
        if np.any(np.isnan(ub)) or np.any(ub == -np.inf):
            raise ValueError("upper bounds must be finite or +inf")
        if np.any(lb > ub):
            raise ValueError("lower bound exceeds upper bound")
        if not np.all(np.isfinite(obj)):
            raise ValueError("objective coefficients must be finite")
        if self.matrix.shape[1] != n:
            raise ValueError("constraint matrix has wrong column count")
        if self.matrix.shape[0] != len(self.rhs) or len(self.senses) != len(self.rhs):
            raise ValueError("constraint arrays disagree in length")
        if self.matrix.nnz and not np.all(np.isfinite(self.matrix.data)):
            raise ValueError("constraint coefficients must be finite")
        if not np.all(np.isfinite(self.rhs)):
            raise ValueError("right-hand sides must be finite")

    @property
    def n_vars(self) -> int:
        return len(self.lb)

    @property
    def n_cons(self) -> int:
        return len(self.rhs)

    def name_of(self, idx: int) -> str:
        if self.names is not None and self.names[idx]:
            return self.names[idx]
        return f"x{idx}"

    def evaluate(self, x) -> float:
        return float(self.objective @ np.asarray(x, dtype=float) + self.offset)

    def max_violation(self, x) -> float:
        """Largest constraint or bound violation of a candidate point."""
        x = np.asarray(x, dtype=float)
        ax = self.matrix @ x
        resid = ax - self.rhs
        viol = 0.0
        le = self.senses == LE
        ge = self.senses == GE
        eq = self.senses == EQ
        if le.any():
            viol = max(viol, float(np.max(resid[le], initial=0.0)))
        if ge.any():
            viol = max(viol, float(np.max(-resid[ge], initial=0.0)))
        if eq.any():
            viol = max(viol, float(np.max(np.abs(resid[eq]), initial=0.0)))
        viol = max(viol, float(np.max(self.lb - x, initial=0.0)))
        finite_ub = np.isfinite(self.ub)
        if finite_ub.any():
            viol = max(viol, float(np.max((x - self.ub)[finite_ub], initial=0.0)))
        return viol

    def write_lp(self, path) -> None:
        """Dump in CPLEX LP text format (debugging aid)."""
        csr = self.matrix
        with open(path, "w") as fh:
            fh.write("Minimize\n obj:")
            for j in np.nonzero(self.objective)[0]:
                fh.write(f" {self.objective[j]:+g} {self.name_of(j)}")
            if self.offset:
                fh.write(f" {self.offset:+g}")
            fh.write("\nSubject To\n")
            sense_txt = {LE: "<=", EQ: "=", GE: ">="}
            for i in range(self.n_cons):
                row = csr.getrow(i)
                terms = " ".join(
                    f"{v:+g} {self.name_of(j)}" for j, v in zip(row.indices, row.data)
                )
                fh.write(f" c{i}: {terms} {sense_txt[self.senses[i]]} {self.rhs[i]:g}\n")
            fh.write("Bounds\n")
            for j in range(self.n_vars):
                ub = "+inf" if not np.isfinite(self.ub[j]) else f"{self.ub[j]:g}"
                fh.write(f" {self.lb[j]:g} <= {self.name_of(j)} <= {ub}\n")
            general = [j for j in range(self.n_vars) if self.kinds[j] == INTEGER]
            binaries = [j for j in range(self.n_vars) if self.kinds[j] == BINARY]
            if general:
                fh.write("General\n " + " ".join(self.name_of(j) for j in general) + "\n")
            if binaries:
                fh.write("Binary\n " + " ".join(self.name_of(j) for j in binaries) + "\n")
            fh.write("End\n")


class ModelBuilder:
    """Incremental construction helper producing an immutable MilpModel."""

    def __init__(self):
        self._lb: list[float] = []
        self._ub: list[float] = []
        self._kinds: list[str] = []
        self._names: list[str] = []
        self._rows: list[np.ndarray] = []
        self._cols: list[np.ndarray] = []
        self._vals: list[np.ndarray] = []
        self._senses: list[str] = []
        self._rhs: list[float] = []
        self._obj: dict[int, float] = {}
        self._offset = 0.0
        self._n_rows = 0

    def add_var(self, lb=0.0, ub=math.inf, kind=CONTINUOUS, name="", obj=0.0) -> int:
        idx = len(self._lb)
        self._lb.append(float(lb))
        self._ub.append(float(ub))
        self._kinds.append(kind)
        self._names.append(name)
        if obj:
            self._obj[idx] = float(obj)
        return idx

    def add_block(self, count, lb=0.0, ub=math.inf, kind=CONTINUOUS) -> int:
        """Add ``count`` identical unnamed variables; returns the first index."""
        start = len(self._lb)
        self._lb.extend([float(lb)] * count)
        self._ub.extend([float(ub)] * count)
        self._kinds.extend([kind] * count)
        self._names.extend([""] * count)
        return start

    def add_constraint(self, terms, sense, rhs) -> int:
        """terms: iterable of (index, coefficient)."""
        idx = np.fromiter((t[0] for t in terms), dtype=np.int64)
        val = np.fromiter((t[1] for t in terms), dtype=float)
        return self.add_rows_coo(np.full(len(idx), 0), idx, val, [sense], [rhs])

    def add_rows_coo(self, rel_rows, cols, vals, senses, rhs) -> int:
        """Bulk-add rows; ``rel_rows`` are 0-based within this batch."""
        first = self._n_rows
        self._rows.append(np.asarray(rel_rows, dtype=np.int64) + first)
        self._cols.append(np.asarray(cols, dtype=np.int64))
        self._vals.append(np.asarray(vals, dtype=float))
        self._senses.extend(senses)
        self._rhs.extend(float(r) for r in rhs)
        self._n_rows += len(senses)
        return first

    def set_objective_terms(self, cols, coefs) -> None:
        for c, v in zip(np.asarray(cols).ravel(), np.asarray(coefs, dtype=float).ravel()):
            self._obj[int(c)] = self._obj.get(int(c), 0.0) + float(v)

    def add_offset(self, value: float) -> None:
        self._offset += float(value)

    def build(self) -> MilpModel:
        n = len(self._lb)
        rows = np.concatenate(self._rows) if self._rows else np.zeros(0, dtype=np.int64)
        cols = np.concatenate(self._cols) if self._cols else np.zeros(0, dtype=np.int64)
        vals = np.concatenate(self._vals) if self._vals else np.zeros(0)
        if len(cols) and (cols.min() < 0 or cols.max() >= n):
            raise ValueError("constraint references an undeclared variable id")
        matrix = sp.coo_matrix((vals, (rows, cols)), shape=(self._n_rows, n)).tocsr()
        obj = np.zeros(n)
        for j, v in self._obj.items():
            obj[j] = v
        names = tuple(self._names) if any(self._names) else None
        return MilpModel(
            lb=np.asarray(self._lb),
            ub=np.asarray(self._ub),
            kinds=np.asarray(self._kinds, dtype="<U1"),
            matrix=matrix,
            senses=np.asarray(self._senses, dtype="<U1"),
            rhs=np.asarray(self._rhs),
            objective=obj,
            offset=self._offset,
            names=names,
        )


@dataclass(frozen=True)
class CostWeights:
    """Objective weights: room opened / closed / open-bed / reserved-bed / overbed."""

    alpha: float
    beta: float
    gamma: float
    delta: float
    epsilon: float

    def __post_init__(self):
        if min(self.alpha, self.beta, self.gamma, self.delta, self.epsilon) <= 0:
            raise ValueError("all cost weights must be > 0")

    def as_tuple(self):
        return (self.alpha, self.beta, self.gamma, self.delta, self.epsilon)


# cost presets tuned toward few overbeds / few regular beds / few room changes
SP_O = CostWeights(15.0, 15.0, 1.0, 1.5, 40.0)
SP_B = CostWeights(6.0, 6.0, 1.0, 1.0, 13.0)
SP_R = CostWeights(60.0, 60.0, 1.0, 1.25, 25.0)
WEIGHT_PRESETS = {"SP-O": SP_O, "SP-B": SP_B, "SP-R": SP_R}


@dataclass(frozen=True)
class HospitalRooms:
    """Static room structure and yesterday's flags for one hospital."""

    standard_capacity: int
    room_beds: tuple[int, ...]
    open_prev: tuple[int, ...]
    sched1_prev: tuple[int, ...]
    sched2_prev: tuple[int, ...]

    def __post_init__(self):
        n = len(self.room_beds)
        if any(b <= 0 for b in self.room_beds):
            raise ValueError("room sizes must be > 0")
        if self.standard_capacity <= 0:
            raise ValueError("standard capacity must be > 0")
        for flags in (self.open_prev, self.sched1_prev, self.sched2_prev):
            if len(flags) != n or any(f not in (0, 1) for f in flags):
                raise ValueError("flags must be 0/1 per room")
        for k in range(1, n):
            if self.open_prev[k] > self.open_prev[k - 1]:
                raise ValueError("open rooms must form a prefix (sequential rooms)")
        for k in range(n):
            if self.open_prev[k] and (self.sched1_prev[k] or self.sched2_prev[k]):
                raise ValueError("a room cannot be simultaneously open and scheduled")

    @property
    def n_rooms(self) -> int:
        return len(self.room_beds)

    @property
    def open_count(self) -> int:
        return sum(self.open_prev)

    @property
    def capacity_prev(self) -> int:
        return self.standard_capacity + sum(
            b for b, z in zip(self.room_beds, self.open_prev) if z
        )


@dataclass(frozen=True)
class RoomLedger:
    """Per-hospital room structure plus yesterday's first-stage flags."""

    hospitals: tuple[HospitalRooms, ...]

    @property
    def n_hospitals(self) -> int:
        return len(self.hospitals)

    @classmethod
    def fresh(cls, capacities, room_beds) -> "RoomLedger":
        hs = []
        for c, beds in zip(capacities, room_beds):
            n = len(beds)
            hs.append(
                HospitalRooms(
                    standard_capacity=int(c),
                    room_beds=tuple(int(b) for b in beds),
                    open_prev=(0,) * n,
                    sched1_prev=(0,) * n,
                    sched2_prev=(0,) * n,
                )
            )
        return cls(hospitals=tuple(hs))


@dataclass(frozen=True)
class RoomPlan:
    """Decoded SP1 first stage: open/scheduled flags over the lookahead.

    ``open_rooms[h]`` is an (n_h, s) 0/1 array (day 0 = today); scheduling
    flags have the same shape.  ``opened``/``closed`` are today's room-count
    deltas against the ledger.
    """

    open_rooms: tuple[np.ndarray, ...]
    sched1: tuple[np.ndarray, ...]
    sched2: tuple[np.ndarray, ...]
    opened: tuple[int, ...]
    closed: tuple[int, ...]
    standard_capacity: tuple[int, ...]
    room_beds: tuple[tuple[int, ...], ...]

    @property
    def horizon(self) -> int:
        return self.open_rooms[0].shape[1] if self.open_rooms else 0

    def capacity_schedule(self) -> np.ndarray:
        """C[h, u] = standard capacity + beds in rooms open on day u."""
        H = len(self.open_rooms)
        out = np.zeros((H, self.horizon), dtype=np.int64)
        for h in range(H):
            beds = np.asarray(self.room_beds[h])
            out[h, :] = self.standard_capacity[h] + beds @ self.open_rooms[h]
        return out

    def open_beds(self, u: int = 0) -> np.ndarray:
        return np.array(
            [np.asarray(self.room_beds[h]) @ self.open_rooms[h][:, u] for h in range(len(self.open_rooms))],
            dtype=np.int64,
        )

    def reserved_beds(self, u: int = 0) -> np.ndarray:
        out = []
        for h in range(len(self.open_rooms)):
            beds = np.asarray(self.room_beds[h])
            flags = np.maximum(self.sched1[h][:, u], self.sched2[h][:, u])
            out.append(int(beds @ flags))
        return np.asarray(out, dtype=np.int64)

    def to_json(self) -> dict:
        return {
            "open_rooms": [a.tolist() for a in self.open_rooms],
            "sched1": [a.tolist() for a in self.sched1],
            "sched2": [a.tolist() for a in self.sched2],
            "opened": list(self.opened),
            "closed": list(self.closed),
            "standard_capacity": list(self.standard_capacity),
            "room_beds": [list(b) for b in self.room_beds],
        }


@dataclass(frozen=True)
class AssignmentPlan:
    """Destination hospital for the j-th assignable arrival of the day."""

    destinations: tuple[int, ...]

    @property
    def truncation(self) -> int:
        return len(self.destinations)

    def to_json(self) -> dict:
        return {"destinations": list(self.destinations)}


class DecodeError(ValueError):
    """Solution violates integrality or plan invariants (solver bug)."""


class BuildError(ValueError):
    """Inputs violate the invariants a program build requires."""


@dataclass(frozen=True)
class Sp1IndexMap:
    """Column layout of a compiled SP1 model."""

    ledger: RoomLedger
    horizon: int
    n_scenarios: int
    z_off: tuple[int, ...]  # per hospital; z[h][n, u] = z_off[h] + n * s + u
    v1_off: tuple[int, ...]
    v2_off: tuple[int, ...]
    yplus_off: int  # yplus[h, u] = yplus_off + h * s + u
    yminus_off: int
    x_off: int  # x[i, h, u] = x_off + (i * H + h) * s + (u - 1)
    n_off: int
    o_off: int
    n_vars: int

    def z(self, h, n, u):
        return self.z_off[h] + n * self.horizon + u

    def v1(self, h, n, u):
        return self.v1_off[h] + n * self.horizon + u

    def v2(self, h, n, u):
        return self.v2_off[h] + n * self.horizon + u

    def yplus(self, h, u):
        return self.yplus_off + h * self.horizon + u

    def yminus(self, h, u):
        return self.yminus_off + h * self.horizon + u

    def x(self, i, h, u):
        H = self.ledger.n_hospitals
        return self.x_off + (i * H + h) * self.horizon + (u - 1)

    def occupancy(self, i, h, u):
        H = self.ledger.n_hospitals
        return self.n_off + (i * H + h) * self.horizon + (u - 1)

    def overbeds(self, i, h, u):
        H = self.ledger.n_hospitals
        return self.o_off + (i * H + h) * self.horizon + (u - 1)


@dataclass(frozen=True)
class Sp2IndexMap:
    """Column layout of a compiled SP2 model."""

    n_hospitals: int
    horizon: int
    n_scenarios: int
    truncation: int
    w_off: int  # w[j, h] = w_off + (j - 1) * H + h, j = 1..J
    x_off: int  # x[i, j, h, u] u = 2..s
    n_off: int  # N[i, j, h, u] u = 1..s
    o_off: int
    n_vars: int

    def w(self, j, h):
        return self.w_off + (j - 1) * self.n_hospitals + h

    def x(self, i, j, h, u):
        J1, H, s1 = self.truncation + 1, self.n_hospitals, self.horizon - 1
        return self.x_off + (((i * J1 + j) * H) + h) * s1 + (u - 2)

    def occupancy(self, i, j, h, u):
        J1, H, s = self.truncation + 1, self.n_hospitals, self.horizon
        return self.n_off + (((i * J1 + j) * H) + h) * s + (u - 1)

    def overbeds(self, i, j, h, u):
        J1, H, s = self.truncation + 1, self.n_hospitals, self.horizon
        return self.o_off + (((i * J1 + j) * H) + h) * s + (u - 1)


def build_sp1(
    ledger: RoomLedger, scenarios: ScenarioSet, weights: CostWeights
) -> tuple[MilpModel, Sp1IndexMap]:
    """Compile the room opening/closing stochastic program.

    First stage: open/scheduled room indicators and room-count deltas over
    the lookahead.  Second stage (per scenario): route assignable arrivals,
    accumulate occupancy, and pay for overbeds.  The terminal day's overbeds
    and open beds are weighted so they count for the whole remainder of the
    horizon.
    """
    s = scenarios.horizon
    I = scenarios.count
    H = ledger.n_hospitals
    if H != scenarios.hospitals:
        raise BuildError("ledger and scenarios disagree on hospital count")
    if s < 3:
        raise BuildError("horizon must be >= 3 (two-day opening lead time)")
    alpha, beta, gamma, delta, eps = weights.as_tuple()

    b = ModelBuilder()
    z_off, v1_off, v2_off = [], [], []
    for h, hosp in enumerate(ledger.hospitals):
        nh = hosp.n_rooms
        z_off.append(b.add_block(nh * s, 0.0, 1.0, BINARY))
        # scheduling flags are integral at any optimum given integral z
        v1_off.append(b.add_block(nh * s, 0.0, 1.0, CONTINUOUS))
        v2_off.append(b.add_block(nh * s, 0.0, 1.0, CONTINUOUS))
    yplus_off = b.add_block(H * s, 0.0, max(h.n_rooms for h in ledger.hospitals), CONTINUOUS)
    yminus_off = b.add_block(H * s, 0.0, max(h.n_rooms for h in ledger.hospitals), CONTINUOUS)
    # routed arrivals form a min-cost flow once z is integral, so their
    # LP relaxation is value-exact and they never need branching
    x_off = b.add_block(I * H * s, 0.0, math.inf, CONTINUOUS)
    n_off = b.add_block(I * H * s, 0.0, math.inf, CONTINUOUS)
    o_off = b.add_block(I * H * s, 0.0, math.inf, CONTINUOUS)
    idx = Sp1IndexMap(
        ledger=ledger,
        horizon=s,
        n_scenarios=I,
        z_off=tuple(z_off),
        v1_off=tuple(v1_off),
        v2_off=tuple(v2_off),
        yplus_off=yplus_off,
        yminus_off=yminus_off,
        x_off=x_off,
        n_off=n_off,
        o_off=o_off,
        n_vars=o_off + I * H * s,
    )

    u_all = np.arange(s)
    # objective
    for h, hosp in enumerate(ledger.hospitals):
        beds = np.asarray(hosp.room_beds, dtype=float)
        for n in range(hosp.n_rooms):
            cols = idx.z_off[h] + n * s + u_all
            coefs = np.full(s, gamma * beds[n])
            coefs[s - 1] += (s - 1) * gamma * beds[n]  # terminal open-bed cost
            b.set_objective_terms(cols, coefs)
            b.set_objective_terms(idx.v1_off[h] + n * s + u_all, np.full(s, delta * beds[n]))
            b.set_objective_terms(idx.v2_off[h] + n * s + u_all, np.full(s, delta * beds[n]))
        b.set_objective_terms(yplus_off + h * s + u_all, np.full(s, alpha))
        b.set_objective_terms(yminus_off + h * s + u_all, np.full(s, beta))
    o_coefs = np.full((I, H, s), eps / I)
    o_coefs[:, :, s - 1] *= s  # terminal overbeds count for s days in total
    b.set_objective_terms(o_off + np.arange(I * H * s), o_coefs.ravel())

    # first-stage constraints
    for h, hosp in enumerate(ledger.hospitals):
        nh = hosp.n_rooms
        zo, v1o, v2o = idx.z_off[h], idx.v1_off[h], idx.v2_off[h]
        zp = np.asarray(hosp.open_prev)
        v1p = np.asarray(hosp.sched1_prev)
        v2p = np.asarray(hosp.sched2_prev)
        # sequential rooms: z[n, u] <= z[n-1, u]
        if nh >= 2:
            n_grid, u_grid = np.meshgrid(np.arange(1, nh), u_all, indexing="ij")
            rows = np.arange(n_grid.size)
            b.add_rows_coo(
                np.concatenate([rows, rows]),
                np.concatenate(
                    [zo + n_grid.ravel() * s + u_grid.ravel(), zo + (n_grid.ravel() - 1) * s + u_grid.ravel()]
                ),
                np.concatenate([np.ones(rows.size), -np.ones(rows.size)]),
                [LE] * rows.size,
                [0.0] * rows.size,
            )
        # room-count delta: sum_n (z[., u] - z[., u-1]) - y+ + y- = 0
        for u in range(s):
            terms = [(zo + n * s + u, 1.0) for n in range(nh)]
            rhs = 0.0
            if u == 0:
                rhs = float(zp.sum())
            else:
                terms += [(zo + n * s + (u - 1), -1.0) for n in range(nh)]
            terms += [(idx.yplus(h, u), -1.0), (idx.yminus(h, u), 1.0)]
            b.add_constraint(terms, EQ, rhs)
        # open only if open yesterday or prepared: z[u] - v1[u-1] - z[u-1] <= 0
        for n in range(nh):
            for u in range(s):
                if u == 0:
                    b.add_constraint([(zo + n * s, 1.0)], LE, float(v1p[n] + zp[n]))
                else:
                    b.add_constraint(
                        [(zo + n * s + u, 1.0), (v1o + n * s + u - 1, -1.0), (zo + n * s + u - 1, -1.0)],
                        LE,
                        0.0,
                    )
        # preparing chain: v1[u] - v2[u-1] - v1[u-1] <= 0
        for n in range(nh):
            for u in range(s):
                if u == 0:
                    b.add_constraint([(v1o + n * s, 1.0)], LE, float(v2p[n] + v1p[n]))
                else:
                    b.add_constraint(
                        [(v1o + n * s + u, 1.0), (v2o + n * s + u - 1, -1.0), (v1o + n * s + u - 1, -1.0)],
                        LE,
                        0.0,
                    )
        # a room closed today cannot reopen tomorrow:
        # z[u+1] - z[u] - 1 <= z[u] - z[u-1]
        for n in range(nh):
            for u in range(s - 1):
                if u == 0:
                    b.add_constraint(
                        [(zo + n * s + 1, 1.0), (zo + n * s, -2.0)], LE, 1.0 - float(zp[n])
                    )
                else:
                    b.add_constraint(
                        [
                            (zo + n * s + u + 1, 1.0),
                            (zo + n * s + u, -2.0),
                            (zo + n * s + u - 1, 1.0),
                        ],
                        LE,
                        1.0,
                    )

    # second stage, vectorised over scenarios
    i_g, u_g = np.meshgrid(np.arange(I), np.arange(s), indexing="ij")
    # (8): sum_h x[i, h, u] = A[i, u]
    rows = (i_g * s + u_g).ravel()
    cols = []
    for h in range(H):
        cols.append(x_off + ((np.arange(I)[:, None] * H + h) * s + np.arange(s)[None, :]).ravel())
    b.add_rows_coo(
        np.tile(rows, H),
        np.concatenate(cols),
        np.ones(I * s * H),
        [EQ] * (I * s),
        scenarios.arrivals.astype(float).ravel(),
    )
    # (9): N[i, h, u] - sum_{l <= u} x[i, h, l] = Ntilde[i, h, u]
    base_rows = np.arange(I * H * s)
    pair_u, pair_l = np.tril_indices(s)
    ihu = (np.arange(I)[:, None] * H + np.arange(H)[None, :]).ravel()  # (I*H,)
    rows_x = (ihu[:, None] * s + pair_u[None, :]).ravel()
    cols_x = x_off + (ihu[:, None] * s + pair_l[None, :]).ravel()
    b.add_rows_coo(
        np.concatenate([base_rows, rows_x]),
        np.concatenate([n_off + base_rows, cols_x]),
        np.concatenate([np.ones(I * H * s), -np.ones(rows_x.size)]),
        [EQ] * (I * H * s),
        scenarios.occupancy.astype(float).transpose(0, 1, 2).ravel(),
    )
    # (10): N[i, h, u] - sum_n b z[h, n, u-1] - o[i, h, u] <= c_h
    rows_n = base_rows
    rows_list = [rows_n, rows_n]
    cols_list = [n_off + base_rows, o_off + base_rows]
    vals_list = [np.ones(I * H * s), -np.ones(I * H * s)]
    rhs_cap = np.empty((I, H, s))
    for h, hosp in enumerate(ledger.hospitals):
        rhs_cap[:, h, :] = hosp.standard_capacity
        beds = np.asarray(hosp.room_beds, dtype=float)
        # row for (i, h, u) has z columns at day u (capacity set the evening before)
        rr = ((np.arange(I)[:, None] * H + h) * s + np.arange(s)[None, :]).ravel()
        for n in range(hosp.n_rooms):
            rows_list.append(rr)
            cols_list.append(np.tile(idx.z_off[h] + n * s + np.arange(s), I))
            vals_list.append(np.full(rr.size, -beds[n]))
    b.add_rows_coo(
        np.concatenate(rows_list),
        np.concatenate(cols_list),
        np.concatenate(vals_list),
        [LE] * (I * H * s),
        rhs_cap.ravel(),
    )

    # tighten x by its daily total (valid since sum_h x = A, x >= 0)
    model = b.build()
    ub = model.ub.copy()
    x_ub = np.repeat(scenarios.arrivals.astype(float)[:, None, :], H, axis=1).ravel()
    ub[x_off : x_off + I * H * s] = x_ub
    model = MilpModel(
        lb=model.lb,
        ub=ub,
        kinds=model.kinds,
        matrix=model.matrix,
        senses=model.senses,
        rhs=model.rhs,
        objective=model.objective,
        offset=model.offset,
        names=model.names,
    )
    return model, idx


def build_sp2(
    capacity: np.ndarray, scenarios: ScenarioSet, pmf: AssignCountPmf
) -> tuple[MilpModel, Sp2IndexMap]:
    """Compile the patient-assignment stochastic program.

    ``capacity[h, u]`` is SP1's committed bed count for day u = 0..s-1.
    First stage: one-hot destination per potential arrival j = 1..J; second
    stage per scenario bundle (i, j): future routing, occupancy and
    overbeds, with today's j assignments accumulated into every day.
    """
    s = scenarios.horizon
    I = scenarios.count
    H = scenarios.hospitals
    capacity = np.asarray(capacity, dtype=float)
    if capacity.shape != (H, s):
        raise BuildError("capacity schedule must cover every hospital and lookahead day")
    J = pmf.truncation
    p = np.asarray(pmf.probabilities, dtype=float)

    b = ModelBuilder()
    w_off = b.add_block(J * H, 0.0, 1.0, BINARY) if J > 0 else 0
    J1 = J + 1
    x_ct = I * J1 * H * (s - 1)
    n_ct = I * J1 * H * s
    x_off = b.add_block(x_ct, 0.0, math.inf, CONTINUOUS) if x_ct else 0
    n_off = b.add_block(n_ct, 0.0, math.inf, CONTINUOUS)
    o_off = b.add_block(n_ct, 0.0, math.inf, CONTINUOUS)
    idx = Sp2IndexMap(
        n_hospitals=H,
        horizon=s,
        n_scenarios=I,
        truncation=J,
        w_off=w_off,
        x_off=x_off,
        n_off=n_off,
        o_off=o_off,
        n_vars=o_off + n_ct,
    )

    # objective: (1/I) sum p(j) o[i, j, h, u]
    o_coefs = np.broadcast_to(p[None, :, None, None], (I, J1, H, s)) / I
    b.set_objective_terms(o_off + np.arange(n_ct), o_coefs.ravel())

    # (15): each arrival assigned to exactly one hospital
    if J > 0:
        rows = np.repeat(np.arange(J), H)
        cols = w_off + np.arange(J * H)
        b.add_rows_coo(rows, cols, np.ones(J * H), [EQ] * J, [1.0] * J)

    if s > 1:
        # (17): sum_h x[i, j, h, u] = A[i, u], u = 2..s
        i_g, j_g, u_g = np.meshgrid(np.arange(I), np.arange(J1), np.arange(1, s), indexing="ij")
        rows = (i_g * J1 + j_g).ravel() * (s - 1) + (u_g.ravel() - 1)
        cols_all, rows_all = [], []
        for h in range(H):
            # x's day index runs 0..s-2 for calendar days u = 2..s
            cols_all.append((x_off + (((i_g * J1 + j_g) * H + h) * (s - 1) + (u_g - 1))).ravel())
            rows_all.append(rows)
        rhs_a = np.repeat(scenarios.arrivals[:, None, 1:], J1, axis=1).astype(float).ravel()
        b.add_rows_coo(
            np.concatenate(rows_all),
            np.concatenate(cols_all),
            np.ones(I * J1 * (s - 1) * H),
            [EQ] * (I * J1 * (s - 1)),
            rhs_a,
        )

    # (18): N - sum_{l=2..u} x - sum_{k<=j} w = Ntilde
    base_rows = np.arange(n_ct)
    rows_list = [base_rows]
    cols_list = [n_off + base_rows]
    vals_list = [np.ones(n_ct)]
    if s > 1:
        pair_u, pair_l = np.tril_indices(s - 1)  # day u = pair_u + 2, x col u = pair_l
        ijh = np.arange(I * J1 * H)
        rows_x = (ijh[:, None] * s + (pair_u[None, :] + 1)).ravel()
        cols_x = x_off + (ijh[:, None] * (s - 1) + pair_l[None, :]).ravel()
        rows_list.append(rows_x)
        cols_list.append(cols_x)
        vals_list.append(-np.ones(rows_x.size))
    if J > 0:
        j_idx, k_idx = np.tril_indices(J)  # j = j_idx + 1, k = k_idx + 1
        i_r = np.arange(I)
        h_r = np.arange(H)
        u_r = np.arange(s)
        # rows for (i, j_idx+1, h, u); cols w[k_idx+1, h]
        iw, pw = np.meshgrid(i_r, np.arange(j_idx.size), indexing="ij")
        jj = j_idx[pw] + 1
        kk = k_idx[pw] + 1
        rows_w = (
            ((iw[:, :, None, None] * J1 + jj[:, :, None, None]) * H + h_r[None, None, :, None]) * s
            + u_r[None, None, None, :]
        ).ravel()
        cols_w = (
            w_off
            + (kk[:, :, None, None] - 1) * H
            + h_r[None, None, :, None]
            + 0 * u_r[None, None, None, :]
        ).ravel()
        rows_list.append(rows_w)
        cols_list.append(cols_w)
        vals_list.append(-np.ones(rows_w.size))
    rhs_n = np.repeat(scenarios.occupancy[:, None, :, :], J1, axis=1).astype(float).ravel()
    b.add_rows_coo(
        np.concatenate(rows_list),
        np.concatenate(cols_list),
        np.concatenate(vals_list),
        [EQ] * n_ct,
        rhs_n,
    )

    # (19): N - o <= C[h, u-1]
    rhs_c = np.broadcast_to(capacity[None, None, :, :], (I, J1, H, s)).ravel()
    b.add_rows_coo(
        np.concatenate([base_rows, base_rows]),
        np.concatenate([n_off + base_rows, o_off + base_rows]),
        np.concatenate([np.ones(n_ct), -np.ones(n_ct)]),
        [LE] * n_ct,
        rhs_c,
    )

    model = b.build()
    if x_ct:
        ub = model.ub.copy()
        x_ub = np.repeat(scenarios.arrivals[:, None, None, 1:], J1, axis=1)
        x_ub = np.repeat(x_ub, H, axis=2).astype(float).ravel()
        ub[x_off : x_off + x_ct] = x_ub
        model = MilpModel(
            lb=model.lb,
            ub=ub,
            kinds=model.kinds,
            matrix=model.matrix,
            senses=model.senses,
            rhs=model.rhs,
            objective=model.objective,
            offset=model.offset,
            names=model.names,
        )
    return model, idx


def _snap_binary(value, what):
    if abs(value - round(value)) > 1e-6 or round(value) not in (0.0, 1.0):
        raise DecodeError(f"{what} is not 0/1 within tolerance: {value!r}")
    return int(round(value))


def decode_sp1(solution, idx: Sp1IndexMap) -> RoomPlan:
    """Turn an integral SP1 solution into a validated RoomPlan."""
    x = np.asarray(solution, dtype=float)
    s = idx.horizon
    ledger = idx.ledger
    opens, s1, s2 = [], [], []
    opened, closed = [], []
    for h, hosp in enumerate(ledger.hospitals):
        nh = hosp.n_rooms
        z = np.empty((nh, s), dtype=np.int64)
        v1 = np.empty((nh, s), dtype=np.int64)
        v2 = np.empty((nh, s), dtype=np.int64)
        for n in range(nh):
            for u in range(s):
                z[n, u] = _snap_binary(x[idx.z(h, n, u)], f"z[h{h},n{n},u{u}]")
                v1[n, u] = _snap_binary(x[idx.v1(h, n, u)], f"v1[h{h},n{n},u{u}]")
                v2[n, u] = _snap_binary(x[idx.v2(h, n, u)], f"v2[h{h},n{n},u{u}]")
        for u in range(s):
            col = z[:, u]
            if np.any(np.diff(col) > 0):
                raise DecodeError(f"rooms not opened sequentially at hospital {h}, day {u}")
        for n in range(nh):
            if z[n, 0] > hosp.open_prev[n] + hosp.sched1_prev[n]:
                raise DecodeError(
                    f"room {n} at hospital {h} opens today without yesterday's preparation"
                )
        opens.append(z)
        s1.append(v1)
        s2.append(v2)
        delta = int(z[:, 0].sum()) - hosp.open_count
        opened.append(max(delta, 0))
        closed.append(max(-delta, 0))
    return RoomPlan(
        open_rooms=tuple(opens),
        sched1=tuple(s1),
        sched2=tuple(s2),
        opened=tuple(opened),
        closed=tuple(closed),
        standard_capacity=tuple(h.standard_capacity for h in ledger.hospitals),
        room_beds=tuple(h.room_beds for h in ledger.hospitals),
    )


def decode_sp2(solution, idx: Sp2IndexMap) -> AssignmentPlan:
    """Turn an integral SP2 solution into destination choices, one per arrival."""
    x = np.asarray(solution, dtype=float)
    destinations = []
    for j in range(1, idx.truncation + 1):
        row = [_snap_binary(x[idx.w(j, h)], f"w[j{j},h{h}]") for h in range(idx.n_hospitals)]
        if sum(row) != 1:
            raise DecodeError(f"arrival {j} has {sum(row)} destinations")
        destinations.append(row.index(1))
    return AssignmentPlan(destinations=tuple(destinations))
