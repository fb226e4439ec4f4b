"""Ambiguity sets over transition rows and their worst-case oracle.

Each transition row i induces the interval simplex

    P_i = { p in [0,1]^{K+1} : sum(p) = 1, lower <= p <= upper }

(the last coordinate is the unsafe destination).  The worst-case expectation
max_{p in P_i} v . p has a closed-form greedy solution: sort destinations by
value descending and push each to its upper bound until the unit budget
runs out.  The argmax is always a vertex of P_i (at most one coordinate
strictly between its bounds).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .bounds import TransitionBounds
from .geometry import DimensionMismatch

__all__ = [
    "AmbiguitySet",
    "HPolytope",
    "worst_case_value",
    "martingale_gap",
    "to_hpolytope",
    "vertex_enumerate",
    "sample_feasible",
    "batch_worst_case",
    "batch_gaps",
    "WorstCaseBatch",
    "EmptySet",
    "TooLarge",
]

# Float slack allowed on sum(lower) <= 1 <= sum(upper); the greedy clips the
# residual coordinate by at most this much, matching its own tolerance.
_FEAS_SLACK = 1e-12


class EmptySet(ValueError):
    pass


class TooLarge(ValueError):
    pass


@dataclass(frozen=True)
class AmbiguitySet:
    """Interval simplex over K+1 destinations (unsafe last)."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lower.shape != upper.shape or lower.ndim != 1:
            raise DimensionMismatch("lower/upper must be 1-d arrays of equal length")
        if np.any(lower < 0) or np.any(upper > 1) or np.any(lower > upper):
            raise EmptySet("intervals must satisfy 0 <= lower <= upper <= 1")
        if lower.sum() > 1.0 + _FEAS_SLACK or upper.sum() < 1.0 - _FEAS_SLACK:
            raise EmptySet(
                f"no distribution fits: sum(lower)={lower.sum()!r}, "
                f"sum(upper)={upper.sum()!r}"
            )
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def K(self) -> int:
        """Number of decision destinations (length minus the unsafe slot)."""
        return self.lower.shape[0] - 1

    @classmethod
    def from_row(cls, bounds: TransitionBounds, i: int) -> "AmbiguitySet":
        lo, up = bounds.row_dense(int(i))
        return cls(lo, up)

    def contains(self, p, tol: float = 1e-9) -> bool:
        p = np.asarray(p, dtype=float)
        return bool(
            p.shape == self.lower.shape
            and np.all(p >= self.lower - tol)
            and np.all(p <= self.upper + tol)
            and abs(p.sum() - 1.0) <= tol
        )


@dataclass(frozen=True)
class HPolytope:
    """H-representation {p : H p <= h}."""

    H: np.ndarray
    h: np.ndarray

    def contains(self, p, tol: float = 1e-9) -> bool:
        return bool(np.all(self.H @ np.asarray(p, dtype=float) <= self.h + tol))


def _greedy_fill(lower: np.ndarray, upper: np.ndarray, order: np.ndarray) -> np.ndarray:
    """Fill from lower toward upper along ``order`` until the unit budget is spent."""
    p = lower.copy()
    budget = 1.0 - float(lower.sum())
    if budget <= 0.0:
        if budget < -_FEAS_SLACK:
            raise EmptySet("sum of lower bounds exceeds 1")
        return p
    pivot = -1
    for j in order:
        width = upper[j] - p[j]
        if width <= 0.0:
            continue
        take = width if width < budget else budget
        p[j] += take
        budget -= take
        pivot = j
        if budget <= 0.0:
            break
    if pivot >= 0:
        # absorb accumulated rounding into the pivot coordinate so sum(p) == 1
        others = float(p.sum()) - p[pivot]
        resid = 1.0 - others
        if resid > upper[pivot] + _FEAS_SLACK or resid < lower[pivot] - _FEAS_SLACK:
            if budget > _FEAS_SLACK:
                raise EmptySet("sum of upper bounds is below 1")
        p[pivot] = min(max(resid, lower[pivot]), upper[pivot])
    elif budget > _FEAS_SLACK:
        raise EmptySet("sum of upper bounds is below 1")
    return p


def worst_case_value(amb: AmbiguitySet, values) -> tuple:
    """(max_{p in P} v . p, argmax vertex).

    Destinations are processed by value descending; equal values break
    toward the lower index, so a barrier value of exactly 1 sorts ahead of
    the unsafe destination (which sits at the last index).
    """
    values = np.asarray(values, dtype=float)
    if values.shape != amb.lower.shape:
        raise DimensionMismatch(
            f"values length {values.shape} != row length {amb.lower.shape}"
        )
    n = values.shape[0]
    order = np.lexsort((np.arange(n), -values))
    p = _greedy_fill(amb.lower, amb.upper, order)
    return float(values @ p), p


def martingale_gap(amb: AmbiguitySet, b, i: int) -> tuple:
    """beta_i = max(0, max_p (b,1).p - b_i) and the counterexample if positive."""
    b = np.asarray(b, dtype=float)
    if b.shape[0] != amb.K:
        raise DimensionMismatch(f"barrier length {b.shape[0]} != K={amb.K}")
    if not 0 <= int(i) < amb.K:
        raise IndexError(f"region index {i} out of range")
    values = np.append(b, 1.0)
    val, p = worst_case_value(amb, values)
    gap = val - float(b[int(i)])
    if gap > 0.0:
        return gap, p
    return 0.0, None


def to_hpolytope(amb: AmbiguitySet) -> HPolytope:
    """Rows: K+1 upper bounds, K+1 lower bounds, sum <= 1, -sum <= -1."""
    n = amb.lower.shape[0]
    eye = np.eye(n)
    H = np.vstack([eye, -eye, np.ones((1, n)), -np.ones((1, n))])
    h = np.concatenate([amb.upper, -amb.lower, [1.0], [-1.0]])
    return HPolytope(H, h)


def vertex_enumerate(amb: AmbiguitySet, tol: float = _FEAS_SLACK) -> np.ndarray:
    """All vertices of the interval simplex, deduplicated within ``tol``.

    Intended for small rows (K <= 8) as an independent oracle; every vertex
    has at most one coordinate strictly inside its interval.
    """
    n = amb.lower.shape[0]
    if n > 9:
        raise TooLarge(f"vertex enumeration limited to K <= 8, got K={n - 1}")
    lower, upper = amb.lower, amb.upper
    verts = []
    others_idx = np.arange(n)
    for r in range(n):
        rest = others_idx[others_idx != r]
        m = rest.shape[0]
        bits = ((np.arange(2 ** m)[:, None] >> np.arange(m)) & 1).astype(bool)
        pts = np.where(bits, upper[rest], lower[rest])
        resid = 1.0 - pts.sum(axis=1)
        ok = (resid >= lower[r] - tol) & (resid <= upper[r] + tol)
        if not np.any(ok):
            continue
        full = np.empty((int(ok.sum()), n))
        full[:, rest] = pts[ok]
        full[:, r] = np.clip(resid[ok], lower[r], upper[r])
        verts.append(full)
    if not verts:
        raise EmptySet("no vertex found; the set is empty")
    allv = np.vstack(verts)
    order = np.lexsort(allv.T[::-1])
    allv = allv[order]
    keep = np.ones(allv.shape[0], dtype=bool)
    for k in range(1, allv.shape[0]):
        if np.max(np.abs(allv[k] - allv[k - 1])) <= tol:
            keep[k] = False
    return allv[keep]


def sample_feasible(amb: AmbiguitySet) -> np.ndarray:
    """Deterministic member of P: fill the deficit over lower in index order."""
    n = amb.lower.shape[0]
    return _greedy_fill(amb.lower, amb.upper, np.arange(n))


# ----- batched oracle over all rows of a TransitionBounds -------------------


class _AugCSR:
    """CSR rows augmented with the unsafe column as an explicit last entry."""

    def __init__(self, bounds: TransitionBounds):
        K = bounds.K
        counts = np.diff(bounds.indptr) + 1
        indptr = np.zeros(K + 1, dtype=np.int64)
        np.cumsum(counts, out=indptr[1:])
        nnz = int(indptr[-1])
        dests = np.empty(nnz, dtype=np.int64)
        lower = np.empty(nnz)
        upper = np.empty(nnz)
        rows = np.repeat(np.arange(K, dtype=np.int64), counts)
        orig_rows = np.repeat(np.arange(K, dtype=np.int64), np.diff(bounds.indptr))
        pos = np.arange(bounds.nnz, dtype=np.int64) + orig_rows
        dests[pos] = bounds.indices
        lower[pos] = bounds.lower
        upper[pos] = bounds.upper
        upos = indptr[1:] - 1
        dests[upos] = K
        lower[upos] = bounds.u_lower
        upper[upos] = bounds.u_upper
        self.K = K
        self.indptr = indptr
        self.rows = rows
        self.dests = dests
        self.lower = lower
        self.upper = upper
        self.widths = upper - lower
        self.row_lower_sums = bounds.row_lower_sums()
        self._perm_key = None
        self._perm = None

    def sorted_perm(self, order: np.ndarray) -> np.ndarray:
        """Permutation grouping entries by row, ordered by ``order`` rank within rows."""
        key = order.tobytes()
        if self._perm_key == key:
            return self._perm
        rank = np.empty(self.K + 1, dtype=np.int64)
        rank[order] = np.arange(self.K + 1, dtype=np.int64)
        composite = self.rows * np.int64(self.K + 1) + rank[self.dests]
        perm = np.argsort(composite, kind="stable")
        self._perm_key = key
        self._perm = perm
        return perm


def _aug_csr(bounds: TransitionBounds) -> _AugCSR:
    aug = getattr(bounds, "_aug_cache", None)
    if aug is None:
        aug = _AugCSR(bounds)
        bounds._aug_cache = aug
    return aug


@dataclass
class WorstCaseBatch:
    """Argmax distributions for every row, in augmented CSR form.

    ``thresholds`` holds the per-row marginal value t: destinations worth
    more than t sit at their upper bound, destinations worth less at their
    lower bound.  It is the optimal multiplier of the sum-to-one constraint,
    so inner dual solutions can be reconstructed in closed form.
    """

    K: int
    indptr: np.ndarray
    rows: np.ndarray
    dests: np.ndarray
    probs: np.ndarray
    thresholds: Optional[np.ndarray] = None

    def row_distribution(self, i: int) -> np.ndarray:
        s = slice(int(self.indptr[i]), int(self.indptr[i + 1]))
        p = np.zeros(self.K + 1)
        p[self.dests[s]] = self.probs[s]
        return p

    def gradient_scatter(self, coef: np.ndarray) -> np.ndarray:
        """sum_i coef_i * (p_i*[:K] - e_i) as a dense length-K vector."""
        mask = self.dests < self.K
        contrib = coef[self.rows[mask]] * self.probs[mask]
        g = np.bincount(self.dests[mask], weights=contrib, minlength=self.K)
        return g - coef

    def to_csr_matrix(self):
        import scipy.sparse as sp

        return sp.csr_matrix(
            (self.probs, (self.rows, self.dests)), shape=(self.K, self.K + 1)
        )


def batch_worst_case(bounds: TransitionBounds, values) -> tuple:
    """Worst-case expectations of ``values`` (length K+1) for every row at once.

    Returns (vals, WorstCaseBatch).  Row for row identical to
    worst_case_value(AmbiguitySet.from_row(bounds, i), values); the batched
    greedy shares one destination ordering across rows because the values
    do not depend on the row.
    """
    values = np.asarray(values, dtype=float)
    K = bounds.K
    if values.shape != (K + 1,):
        raise DimensionMismatch(f"values must have length K+1={K + 1}")
    aug = _aug_csr(bounds)
    order = np.lexsort((np.arange(K + 1), -values))
    perm = aug.sorted_perm(order)

    # perm only permutes within rows, so entries stay grouped as aug.rows
    lo_s = aug.lower[perm]
    w_s = aug.widths[perm]
    dest_s = aug.dests[perm]
    rows = aug.rows
    budgets = np.maximum(1.0 - aug.row_lower_sums, 0.0)

    cum = np.cumsum(w_s)
    prev_total = np.concatenate([[0.0], cum[aug.indptr[1:-1] - 1]])
    cum_before = (cum - w_s) - prev_total[rows]
    take = np.clip(budgets[rows] - cum_before, 0.0, w_s)
    probs = lo_s + take

    seg = aug.indptr[:-1]
    vals_sorted = values[dest_s]
    row_sums = np.add.reduceat(probs, seg)
    vals = np.add.reduceat(probs * vals_sorted, seg)

    # marginal value per row: the last destination that received any budget,
    # or the most valuable destination when the lower bounds already sum to 1
    idx = np.arange(dest_s.shape[0], dtype=np.int64)
    pos_take = np.where(take > 0.0, idx, np.int64(-1))
    last_take = np.maximum.reduceat(pos_take, seg)
    t_pos = np.where(last_take >= 0, last_take, seg)
    thresholds = vals_sorted[t_pos]

    # absorb cumsum rounding into the single fractional entry of each row;
    # clip saturates at exactly 0.0 / w_s, so the comparisons below are exact
    err = row_sums - 1.0
    frac = np.nonzero((take > 0.0) & (take < w_s))[0]
    if frac.size:
        frac_rows = rows[frac]
        new = np.clip(probs[frac] - err[frac_rows], lo_s[frac], lo_s[frac] + w_s[frac])
        delta = new - probs[frac]
        probs[frac] = new
        vals[frac_rows] += delta * vals_sorted[frac]

    batch = WorstCaseBatch(
        K=K,
        indptr=aug.indptr,
        rows=rows,
        dests=dest_s,
        probs=probs,
        thresholds=thresholds,
    )
    return vals, batch


def batch_gaps(bounds: TransitionBounds, b) -> tuple:
    """Martingale gaps max(0, worst_i - b_i) for all rows, plus the argmaxes."""
    b = np.asarray(b, dtype=float)
    if b.shape != (bounds.K,):
        raise DimensionMismatch(f"barrier length {b.shape} != K={bounds.K}")
    values = np.append(b, 1.0)
    vals, batch = batch_worst_case(bounds, values)
    return np.maximum(vals - b, 0.0), batch
