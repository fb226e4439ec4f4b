"""Linear programming layer.

min c.x  s.t.  G x <= g,  E x = e,  lb <= x <= ub.

The default backend is a self-contained two-phase dense tableau simplex:
Dantzig pricing with an automatic switch to Bland's rule on degenerate
stalls (so termination is guaranteed), deterministic for a fixed input.
A second backend delegates to scipy's HiGHS interface for problems too
large for a dense tableau; both sit behind the same solve_lp call.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
import scipy.sparse as sp

from .geometry import DimensionMismatch

__all__ = [
    "LinearProgram",
    "LPSolution",
    "solve_lp",
    "check_feasible",
    "dump_lp",
    "LPError",
    "LPFailure",
    "NumericalFailure",
]

PIVOT_TOL = 1e-10
FEAS_TOL = 1e-8
MAX_PIVOTS = 10 ** 6
_ENTER_TOL = 1e-9  # reduced costs closer to zero than this never enter
_STALL_PIVOTS = 300  # objective stalls this long -> Bland's rule
_DENSE_CELL_CAP = 6 * 10 ** 7  # refuse dense tableaus beyond this many cells
_REFACTOR_EVERY = 128  # pivots between exact tableau rebuilds


class LPError(ValueError):
    pass


class LPFailure(LPError):
    pass


class NumericalFailure(LPError):
    pass


def _as_matrix(M):
    if M is None:
        return None
    if sp.issparse(M):
        return M.tocsr()
    return np.atleast_2d(np.asarray(M, dtype=float))


@dataclass
class LinearProgram:
    """Minimize c.x subject to G x <= g, E x = e and variable bounds."""

    c: np.ndarray
    G: Optional[object] = None
    g: Optional[np.ndarray] = None
    E: Optional[object] = None
    e: Optional[np.ndarray] = None
    lb: Optional[np.ndarray] = None
    ub: Optional[np.ndarray] = None

    def __post_init__(self):
        self.c = np.atleast_1d(np.asarray(self.c, dtype=float))
        n = self.c.shape[0]
        self.G = _as_matrix(self.G)
        self.E = _as_matrix(self.E)
        self.g = None if self.g is None else np.atleast_1d(np.asarray(self.g, dtype=float))
        self.e = None if self.e is None else np.atleast_1d(np.asarray(self.e, dtype=float))
        if (self.G is None) != (self.g is None) or (self.E is None) != (self.e is None):
            raise DimensionMismatch("matrix given without rhs (or vice versa)")
        if self.G is not None:
            if self.G.shape[1] != n or self.g.shape[0] != self.G.shape[0]:
                raise DimensionMismatch(
                    f"G is {self.G.shape}, g has {self.g.shape[0]} rows, n={n}"
                )
        if self.E is not None:
            if self.E.shape[1] != n or self.e.shape[0] != self.E.shape[0]:
                raise DimensionMismatch(
                    f"E is {self.E.shape}, e has {self.e.shape[0]} rows, n={n}"
                )
        self.lb = (
            np.full(n, -np.inf) if self.lb is None
            else np.atleast_1d(np.asarray(self.lb, dtype=float))
        )
        self.ub = (
            np.full(n, np.inf) if self.ub is None
            else np.atleast_1d(np.asarray(self.ub, dtype=float))
        )
        if self.lb.shape != (n,) or self.ub.shape != (n,):
            raise DimensionMismatch("bound vectors must have length n")
        if np.any(self.lb > self.ub):
            raise LPError("lb > ub for some variable")
        if not np.all(np.isfinite(self.c)):
            raise LPError("objective coefficients must be finite")

    @property
    def n(self) -> int:
        return self.c.shape[0]


@dataclass
class LPSolution:
    status: str  # optimal | infeasible | unbounded
    x: Optional[np.ndarray]
    objective: Optional[float]
    iterations: int
    backend: str
    pivot_tol: float = PIVOT_TOL
    feas_tol: float = FEAS_TOL
    meta: dict = field(default_factory=dict)


def check_feasible(lp: LinearProgram, x, tol: float = FEAS_TOL):
    """Independent feasibility check: (ok, worst violation per constraint group)."""
    x = np.asarray(x, dtype=float)
    if x.shape != (lp.n,):
        raise DimensionMismatch(f"x has shape {x.shape}, expected ({lp.n},)")
    report = {}
    lo_viol = np.max(np.where(np.isfinite(lp.lb), lp.lb - x, 0.0), initial=0.0)
    hi_viol = np.max(np.where(np.isfinite(lp.ub), x - lp.ub, 0.0), initial=0.0)
    report["bounds"] = float(max(lo_viol, hi_viol))
    if lp.G is not None:
        resid = np.asarray(lp.G @ x).ravel() - lp.g
        report["inequalities"] = float(np.max(resid / (1.0 + np.abs(lp.g)), initial=0.0))
    else:
        report["inequalities"] = 0.0
    if lp.E is not None:
        resid = np.abs(np.asarray(lp.E @ x).ravel() - lp.e)
        report["equalities"] = float(np.max(resid / (1.0 + np.abs(lp.e)), initial=0.0))
    else:
        report["equalities"] = 0.0
    ok = all(v <= tol for v in report.values())
    return ok, report


def dump_lp(lp: LinearProgram) -> str:
    """Plain-text dump: objective row first, then constraint rows, then bounds."""
    lines = ["min " + " ".join(format(v, ".12g") for v in lp.c)]
    if lp.G is not None:
        G = lp.G.toarray() if sp.issparse(lp.G) else lp.G
        for r in range(G.shape[0]):
            lines.append(
                "ineq "
                + " ".join(format(v, ".12g") for v in G[r])
                + " <= "
                + format(lp.g[r], ".12g")
            )
    if lp.E is not None:
        E = lp.E.toarray() if sp.issparse(lp.E) else lp.E
        for r in range(E.shape[0]):
            lines.append(
                "eq "
                + " ".join(format(v, ".12g") for v in E[r])
                + " == "
                + format(lp.e[r], ".12g")
            )
    for j in range(lp.n):
        lines.append(f"bound x{j} in [{lp.lb[j]!r}, {lp.ub[j]!r}]")
    return "\n".join(lines) + "\n"


def solve_lp(lp: LinearProgram, backend: str = "dense") -> LPSolution:
    """Solve the LP.  backend: "dense" (bundled simplex) or "highs" (scipy)."""
    if backend == "dense":
        try:
            return _solve_dense(lp)
        except NumericalFailure:
            # Dantzig pricing can corrupt the tableau on near-degenerate
            # problems; Bland's rule is slower but pivots deterministically,
            # so retry once from scratch before giving up.
            return _solve_dense(lp, bland=True)
    if backend == "highs":
        return _solve_highs(lp)
    raise LPError(f"unknown LP backend {backend!r}")


# ----- HiGHS delegate --------------------------------------------------------


def _solve_highs(lp: LinearProgram) -> LPSolution:
    from scipy.optimize import linprog

    bounds = [
        (
            None if not np.isfinite(lp.lb[j]) else float(lp.lb[j]),
            None if not np.isfinite(lp.ub[j]) else float(lp.ub[j]),
        )
        for j in range(lp.n)
    ]
    res = linprog(
        lp.c,
        A_ub=lp.G,
        b_ub=lp.g,
        A_eq=lp.E,
        b_eq=lp.e,
        bounds=bounds,
        method="highs",
    )
    iters = int(res.nit) if hasattr(res, "nit") else 0
    if res.status == 0:
        x = np.asarray(res.x, dtype=float)
        return LPSolution("optimal", x, float(lp.c @ x), iters, "highs")
    if res.status == 2:
        return LPSolution("infeasible", None, None, iters, "highs")
    if res.status == 3:
        return LPSolution("unbounded", None, None, iters, "highs")
    raise LPFailure(f"highs backend failed: status={res.status}, {res.message}")


# ----- dense two-phase simplex ----------------------------------------------


class _Tableau:
    def __init__(self, A: np.ndarray, b: np.ndarray, basis: np.ndarray):
        m, n = A.shape
        self.A0 = A.copy()
        self.b0 = b.copy()
        self.T = np.hstack([A, b[:, None]])
        self.basis = basis
        self.m = m
        self.n = n
        # per-column pivot floor: tableau entries far below the column's
        # original magnitude are roundoff, and pivoting on them poisons the
        # basis (zero-step pivots on noise explode the tableau and admit
        # linearly dependent columns)
        self.pivot_floor = np.maximum(
            PIVOT_TOL, 1e-7 * np.abs(self.A0).max(axis=0, initial=0.0)
        )
        self._buf = np.empty_like(self.T)
        self.pivots = 0
        self.rebuilds = 0

    def rhs(self) -> np.ndarray:
        return self.T[:, -1]

    def drop_rows(self, keep: np.ndarray):
        self.T = self.T[keep]
        self.A0 = self.A0[keep]
        self.b0 = self.b0[keep]
        self.basis = self.basis[keep]
        self.m = keep.shape[0]
        self._buf = np.empty_like(self.T)

    def drop_cols(self, keep: np.ndarray):
        """Keep the given data columns (the rhs column is kept implicitly)."""
        self.T = self.T[:, np.concatenate([keep, [self.T.shape[1] - 1]])]
        self.A0 = self.A0[:, keep]
        self.pivot_floor = self.pivot_floor[keep]
        self.n = keep.shape[0]
        self._buf = np.empty_like(self.T)

    def rebuild(self, specs):
        """Recompute the tableau exactly from the original rows and basis.

        Full-tableau pivoting accumulates roundoff, badly so when pivot
        elements are tiny; solving B T = [A0 | b0] from scratch resets the
        error to one factorization's worth.  ``specs`` pairs each canonical
        cost row with its original cost vector so reduced costs are reset
        too.
        """
        try:
            fresh = np.linalg.solve(
                self.A0[:, self.basis], np.hstack([self.A0, self.b0[:, None]])
            )
        except np.linalg.LinAlgError as exc:
            raise NumericalFailure("singular basis during refactorization") from exc
        if not np.all(np.isfinite(fresh)):
            raise NumericalFailure("refactorization produced non-finite entries")
        self.T[:] = fresh
        rhs = self.T[:, -1]
        scale = 1.0 + np.abs(self.b0).max(initial=0.0)
        if rhs.min(initial=0.0) < -1e-6 * scale:
            raise NumericalFailure(
                f"basis infeasible after refactorization (rhs {rhs.min()!r})"
            )
        np.maximum(rhs, 0.0, out=rhs)
        rows = np.arange(self.m)
        self.T[:, self.basis] = 0.0
        self.T[rows, self.basis] = 1.0
        for cost, w in specs:
            wb = w[self.basis]
            cost[:-1] = w - wb @ self.T[:, :-1]
            cost[-1] = -float(wb @ rhs)
            cost[self.basis] = 0.0
        self.rebuilds += 1

    def pivot(self, row: int, col: int, cost_rows):
        T = self.T
        piv = T[row, col]
        T[row] = T[row] / piv
        colvals = T[:, col].copy()
        colvals[row] = 0.0
        np.multiply(colvals[:, None], T[row][None, :], out=self._buf)
        T -= self._buf
        T[:, col] = 0.0
        T[row, col] = 1.0
        for r in cost_rows:
            if r[col] != 0.0:
                r -= r[col] * T[row]
                r[col] = 0.0
        self.basis[row] = col
        self.pivots += 1


def _entering(cost: np.ndarray, n: int, bland: bool):
    red = cost[:n]
    if bland:
        idx = np.nonzero(red < -_ENTER_TOL)[0]
        return int(idx[0]) if idx.size else None
    j = int(np.argmin(red))
    return j if red[j] < -_ENTER_TOL else None


def _leaving(tab: _Tableau, col: int, bland: bool):
    """Ratio test.  Dantzig mode breaks ties toward the largest pivot element
    (keeps the tableau from blowing up on near-tolerance pivots); Bland mode
    breaks ties toward the smallest basis label, which guarantees termination.
    Entries below the column's noise floor are not trusted as pivots unless
    nothing stronger exists.
    """
    colvals = tab.T[:, col]
    rhs = tab.rhs()
    ok = colvals > tab.pivot_floor[col]
    if not np.any(ok):
        ok = colvals > PIVOT_TOL
    if not np.any(ok):
        return None
    ratios = np.full(tab.m, np.inf)
    # rhs can drift a few ulps below zero; treat that as exactly zero so the
    # ratio test never returns a negative (infeasibility-increasing) step
    ratios[ok] = np.maximum(rhs[ok], 0.0) / colvals[ok]
    best = ratios.min()
    cand = np.nonzero(ratios <= best + 1e-9 * abs(best) + 1e-12)[0]
    if cand.shape[0] == 1:
        return int(cand[0])
    if bland:
        return int(cand[np.argmin(tab.basis[cand])])
    return int(cand[np.argmax(colvals[cand])])


def _run_phase(tab: _Tableau, cost: np.ndarray, other_cost, n_cols: int,
               state: dict, good_enough: Optional[float] = None,
               bland_start: bool = False, budget: Optional[int] = None):
    """Pivot until the phase objective is optimal; returns the phase status.

    The last cost cell holds the negated objective, so progress shows up as
    an increase.  Degenerate stalls switch pricing to Bland's rule, which
    cannot cycle; pricing returns to Dantzig once the objective moves again
    (``bland_start`` keeps Bland active for the whole phase instead).
    ``good_enough`` stops early once the objective falls below it (phase 1
    only needs to reach zero within the feasibility tolerance, and chasing
    exact zero through rounding dust can take thousands of extra pivots).
    ``budget`` caps the pivots in this call; the status is then "budget".
    ``state`` carries the stall counter and pricing mode across calls.
    """
    bland = state.get("bland", bland_start)
    stall = state.get("stall", 0)
    done = 0
    last_obj = cost[-1]
    cost_rows = [cost] + ([other_cost] if other_cost is not None else [])
    try:
        while True:
            if good_enough is not None and -cost[-1] <= good_enough:
                return "optimal"
            j = _entering(cost, n_cols, bland)
            if j is None:
                return "optimal"
            i = _leaving(tab, j, bland)
            if i is None:
                return "unbounded"
            tab.pivot(i, j, cost_rows)
            if tab.pivots > MAX_PIVOTS:
                raise LPFailure(f"pivot cap {MAX_PIVOTS} exceeded")
            if cost[-1] > last_obj + 1e-12:
                last_obj = cost[-1]
                stall = 0
                bland = bland_start
            else:
                stall += 1
                if stall >= _STALL_PIVOTS:
                    bland = True
            done += 1
            if budget is not None and done >= budget:
                return "budget"
    finally:
        state["bland"] = bland
        state["stall"] = stall


def _drive_phase(tab: _Tableau, specs, cost: np.ndarray, other_cost, n_cols: int,
                 good_enough: Optional[float] = None, bland_start: bool = False):
    """Run a phase with periodic exact rebuilds.

    A conclusion ("optimal"/"unbounded") only counts when it is reached on a
    freshly rebuilt tableau without any further pivot; everything else
    triggers a rebuild and another pass, so drifted tableaus can never
    declare a wrong answer.
    """
    clean = False
    state: dict = {}
    for _ in range(20000):
        before = tab.pivots
        status = _run_phase(tab, cost, other_cost, n_cols, state,
                            good_enough=good_enough, bland_start=bland_start,
                            budget=_REFACTOR_EVERY)
        if status != "budget" and clean and tab.pivots == before:
            return status
        tab.rebuild(specs)
        clean = True
    raise NumericalFailure("phase did not settle under refactorization")


def _solve_dense(lp: LinearProgram, bland: bool = False) -> LPSolution:
    n = lp.n
    G = lp.G.toarray() if sp.issparse(lp.G) else lp.G
    E = lp.E.toarray() if sp.issparse(lp.E) else lp.E

    # substitute variables so every simplex variable is >= 0
    # kinds: (shifted, j) x = lb + y ; (mirrored, j) x = ub - y ; (split, j) x = y+ - y-
    col_of = []
    subs = []
    ub_rows = []  # (y column, upper value) pairs for doubly bounded vars
    for j in range(n):
        lo, hi = lp.lb[j], lp.ub[j]
        if np.isfinite(lo):
            subs.append(("shift", j, lo))
            if np.isfinite(hi):
                ub_rows.append((len(subs) - 1, hi - lo))
        elif np.isfinite(hi):
            subs.append(("mirror", j, hi))
        else:
            subs.append(("split", j, 0.0))
    n_y = sum(2 if kind == "split" else 1 for kind, _, _ in subs)

    def expand(M):
        """Rewrite columns of M over the substituted variables."""
        if M is None:
            return None
        out = np.zeros((M.shape[0], n_y))
        col = 0
        for kind, j, _ in subs:
            if kind == "shift":
                out[:, col] = M[:, j]
                col += 1
            elif kind == "mirror":
                out[:, col] = -M[:, j]
                col += 1
            else:
                out[:, col] = M[:, j]
                out[:, col + 1] = -M[:, j]
                col += 2
        return out

    def shift_rhs(M, r):
        if M is None:
            return None
        base = np.zeros(M.shape[1])
        for kind, j, off in subs:
            if kind == "shift":
                base[j] = off
            elif kind == "mirror":
                base[j] = off
        return r - M @ base

    ncols_y = n_y
    Gy = expand(G)
    gy = shift_rhs(G, lp.g) if G is not None else None
    Ey = expand(E)
    ey = shift_rhs(E, lp.e) if E is not None else None

    if ub_rows:
        extra = np.zeros((len(ub_rows), ncols_y))
        extra_rhs = np.empty(len(ub_rows))
        ycols = []
        col = 0
        for kind, j, _ in subs:
            ycols.append(col)
            col += 2 if kind == "split" else 1
        for r, (sub_idx, val) in enumerate(ub_rows):
            extra[r, ycols[sub_idx]] = 1.0
            extra_rhs[r] = val
        Gy = extra if Gy is None else np.vstack([Gy, extra])
        gy = extra_rhs if gy is None else np.concatenate([gy, extra_rhs])

    cy = expand(lp.c[None, :])[0]
    c_shift = 0.0
    for kind, j, off in subs:
        if kind in ("shift", "mirror"):
            c_shift += lp.c[j] * off

    m_ub = 0 if Gy is None else Gy.shape[0]
    m_eq = 0 if Ey is None else Ey.shape[0]
    m = m_ub + m_eq

    if (m + 2) * (ncols_y + m_ub + m + 1) > _DENSE_CELL_CAP:
        raise LPFailure(
            "problem too large for the dense tableau backend; use backend='highs'"
        )

    # assemble [A | slacks | artificials], rhs >= 0
    A = np.zeros((m, ncols_y + m_ub + m))
    b = np.empty(m)
    basis = np.empty(m, dtype=np.int64)
    art_cols = []
    if m_ub:
        A[:m_ub, :ncols_y] = Gy
        b[:m_ub] = gy
        A[np.arange(m_ub), ncols_y + np.arange(m_ub)] = 1.0
    if m_eq:
        A[m_ub:, :ncols_y] = Ey
        b[m_ub:] = ey
    neg = b < 0
    A[neg] *= -1.0
    b[neg] = -b[neg]
    next_art = ncols_y + m_ub
    for r in range(m):
        if r < m_ub and not neg[r]:
            basis[r] = ncols_y + r
        else:
            A[r, next_art] = 1.0
            basis[r] = next_art
            art_cols.append(next_art)
            next_art += 1
    n_tot = ncols_y + m_ub + len(art_cols)
    A = A[:, :n_tot]

    tab = _Tableau(A, b, basis)

    # original cost vectors over all tableau columns, for exact rebuilds
    w2 = np.zeros(n_tot)
    w2[:ncols_y] = cy
    w1 = np.zeros(n_tot)
    w1[art_cols] = 1.0

    # phase-2 cost row, kept canonical throughout phase 1
    cost2 = np.zeros(n_tot + 1)
    cost2[:ncols_y] = cy
    # phase-1 cost row: sum of artificials, canonicalized against the basis
    cost1 = np.zeros(n_tot + 1)
    for col in art_cols:
        cost1[col] = 1.0
    for r in range(m):
        if cost1[tab.basis[r]] != 0.0:
            cost1 -= cost1[tab.basis[r]] * tab.T[r]
            cost1[tab.basis[r]] = 0.0
        if cost2[tab.basis[r]] != 0.0:
            cost2 -= cost2[tab.basis[r]] * tab.T[r]
            cost2[tab.basis[r]] = 0.0

    if art_cols:
        specs = [(cost1, w1), (cost2, w2)]
        scale = 1.0 + np.abs(b).max(initial=0.0)
        status = _drive_phase(tab, specs, cost1, cost2, n_tot,
                              good_enough=0.25 * FEAS_TOL * scale, bland_start=bland)
        if status == "unbounded":
            raise NumericalFailure("phase 1 reported unbounded; tableau corrupt")
        z1 = -cost1[-1]
        if z1 < -1e-6:
            raise NumericalFailure(
                f"phase 1 objective {z1!r} below zero; tableau corrupt"
            )
        if z1 > FEAS_TOL * scale:
            return LPSolution("infeasible", None, None, tab.pivots, "dense")
        # drive remaining artificials out of the basis; their rows carry rhs 0,
        # so a row without a usable pivot is redundant and can be dropped
        art_set = set(art_cols)
        drop_rows = []
        for r in range(tab.m):
            if tab.basis[r] in art_set:
                row = tab.T[r, :n_tot]
                sub = np.abs(row[: ncols_y + m_ub])
                j = int(np.argmax(sub))
                if sub[j] > 1e-7:
                    tab.pivot(r, j, [cost1, cost2])
                else:
                    drop_rows.append(r)
        if drop_rows:
            tab.drop_rows(np.setdiff1d(np.arange(tab.m), drop_rows))
    # remove artificial columns entirely
    tab.drop_cols(np.arange(ncols_y + m_ub))
    cost2 = np.concatenate([cost2[: ncols_y + m_ub], [cost2[-1]]])
    w2 = w2[: ncols_y + m_ub]

    status = _drive_phase(tab, [(cost2, w2)], cost2, None, ncols_y + m_ub,
                          bland_start=bland)
    if status == "unbounded":
        return LPSolution("unbounded", None, None, tab.pivots, "dense")

    y = np.zeros(ncols_y + m_ub)
    rhs = tab.rhs()
    for r in range(tab.m):
        if tab.basis[r] < y.shape[0]:
            y[tab.basis[r]] = max(float(rhs[r]), 0.0)

    x = np.empty(n)
    col = 0
    for kind, j, off in subs:
        if kind == "shift":
            x[j] = off + y[col]
            col += 1
        elif kind == "mirror":
            x[j] = off - y[col]
            col += 1
        else:
            x[j] = y[col] - y[col + 1]
            col += 2

    ok, report = check_feasible(lp, x, tol=1e-6)
    if not ok:
        raise NumericalFailure(f"simplex produced an infeasible point: {report}")
    _ = c_shift  # objective recomputed from x directly
    meta = {"refactorizations": tab.rebuilds}
    if bland:
        meta["bland_restart"] = True
    return LPSolution("optimal", x, float(lp.c @ x), tab.pivots, "dense", meta=meta)
