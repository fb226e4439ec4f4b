"""Interval bounds on one-step transition probabilities.

For a system x' = f(x) + v with v ~ N(0, diag(sigma^2)) and a grid
partition, every source region i gets an interval [lower_ij, upper_ij]
enclosing T(X_j | x) for all x in X_i, plus an interval for the unsafe
destination (everything outside the decision regions).  The bounds are
exact per-dimension extrema of the Gaussian box probability over the
interval hull of the mean image f(X_i).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from functools import reduce
from typing import Mapping, Sequence, Union

import numpy as np
from scipy.special import ndtr

from .geometry import Box, DimensionMismatch, Partition

__all__ = [
    "Affine",
    "IntervalMap",
    "ClosedForm",
    "TransitionBounds",
    "gaussian_box_prob",
    "affine_bounds",
    "interval_map_bounds",
    "transition_row",
    "export_bounds",
    "import_bounds",
    "SPARSITY_THRESHOLD",
    "BoundsError",
    "InfeasibleRow",
    "InvariantViolation",
    "MissingImage",
    "ParseError",
]

# Entries with upper < SPARSITY_THRESHOLD are dropped and treated as exactly [0, 0].
SPARSITY_THRESHOLD = 1e-12

# Pure float drift in a row sum is repaired by widening the unsafe column by at
# most this much; anything larger means the row is genuinely infeasible.
_ROW_REPAIR_TOL = 1e-9


class BoundsError(ValueError):
    pass


class InfeasibleRow(BoundsError):
    pass


class InvariantViolation(BoundsError):
    pass


class MissingImage(BoundsError):
    pass


class ParseError(BoundsError):
    pass


@dataclass(frozen=True)
class Affine:
    """x' = A x + c + v with v ~ N(0, diag(sigma^2))."""

    A: np.ndarray
    c: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        c = np.atleast_1d(np.asarray(self.c, dtype=float))
        sigma = np.atleast_1d(np.asarray(self.sigma, dtype=float))
        n = A.shape[0]
        if A.shape != (n, n):
            raise DimensionMismatch(f"A must be square, got {A.shape}")
        if c.shape != (n,):
            raise DimensionMismatch(f"c has shape {c.shape}, expected ({n},)")
        if sigma.shape == (1,) and n > 1:
            sigma = np.full(n, sigma[0])
        if sigma.shape != (n,):
            raise DimensionMismatch(f"sigma has shape {sigma.shape}, expected ({n},)")
        if np.any(sigma <= 0):
            raise InvariantViolation("sigma must be strictly positive")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "sigma", sigma)

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    def mean_step(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=float) @ self.A.T + self.c


@dataclass(frozen=True)
class IntervalMap:
    """Interval over-approximations of the noiseless image f(X_i) per region.

    ``images`` maps full-grid cell indices to boxes enclosing f(X_i).  Every
    decision region of the partition the map is used with must be covered.
    """

    images: Mapping[int, Box]
    sigma: np.ndarray

    def __post_init__(self):
        sigma = np.atleast_1d(np.asarray(self.sigma, dtype=float))
        if np.any(sigma <= 0):
            raise InvariantViolation("sigma must be strictly positive")
        object.__setattr__(self, "sigma", sigma)

    @classmethod
    def from_function(cls, partition: Partition, image_fn, sigma) -> "IntervalMap":
        """Build by applying ``image_fn(cell_box) -> Box`` to every decision cell."""
        images = {}
        for gi in partition.decision_indices:
            images[int(gi)] = image_fn(partition.cell_box(int(gi)))
        return cls(images=images, sigma=sigma)


@dataclass(frozen=True)
class ClosedForm:
    """Pointwise dynamics x' = fn(x) + v for simulation; fn is vectorized over rows."""

    fn: object
    sigma: np.ndarray
    name: str = "closed-form"

    def __post_init__(self):
        sigma = np.atleast_1d(np.asarray(self.sigma, dtype=float))
        if np.any(sigma <= 0):
            raise InvariantViolation("sigma must be strictly positive")
        object.__setattr__(self, "sigma", sigma)

    def mean_step(self, x: np.ndarray) -> np.ndarray:
        return self.fn(np.asarray(x, dtype=float))


def gaussian_box_prob(mean, sigma, box_lo, box_hi=None):
    """P(N(mean, diag(sigma^2)) lands in the box [box_lo, box_hi]).

    Factorizes over dimensions: prod_d Phi((hi_d - m_d)/sigma_d) -
    Phi((lo_d - m_d)/sigma_d).  ``mean`` may carry leading batch axes.
    Accepts ``box_lo`` as a Box (then box_hi is ignored) or as an array.
    """
    if isinstance(box_lo, Box):
        lo, hi = box_lo.lo, box_lo.hi
    else:
        lo = np.atleast_1d(np.asarray(box_lo, dtype=float))
        if box_hi is None:
            # a [lo, hi] pair for the 1-d case
            if lo.shape[0] != 2:
                raise DimensionMismatch("box_hi missing and box_lo is not a 1-d pair")
            lo, hi = lo[:1], lo[1:]
        else:
            hi = np.atleast_1d(np.asarray(box_hi, dtype=float))
    mean = np.asarray(mean, dtype=float)
    scalar_in = mean.ndim == 0
    mean = np.atleast_1d(mean)
    if mean.shape[-1] != lo.shape[0]:
        raise DimensionMismatch(
            f"mean last axis {mean.shape[-1]} vs box dim {lo.shape[0]}"
        )
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), lo.shape)
    if np.any(sigma <= 0):
        raise InvariantViolation("sigma must be strictly positive")
    per_dim = ndtr((hi - mean) / sigma) - ndtr((lo - mean) / sigma)
    out = np.prod(np.clip(per_dim, 0.0, 1.0), axis=-1)
    return float(out) if scalar_in or out.ndim == 0 else out


class TransitionBounds:
    """Sparse K x (K+1) interval transition matrix over decision regions.

    Row i collects intervals for the K decision destinations (CSR layout;
    absent entries are exactly [0, 0]) plus the unsafe destination
    (u_lower[i], u_upper[i]).  Row feasibility sum(lower) <= 1 <= sum(upper)
    holds for every row.
    """

    def __init__(self, K, indptr, indices, lower, upper, u_lower, u_upper, validate=True):
        self.K = int(K)
        self.indptr = np.asarray(indptr, dtype=np.int64)
        self.indices = np.asarray(indices, dtype=np.int64)
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        self.u_lower = np.asarray(u_lower, dtype=float)
        self.u_upper = np.asarray(u_upper, dtype=float)
        if validate:
            self.validate()

    # ----- constructors -------------------------------------------------

    @classmethod
    def from_dense(cls, lower, upper, u_lower, u_upper) -> "TransitionBounds":
        lower = np.atleast_2d(np.asarray(lower, dtype=float))
        upper = np.atleast_2d(np.asarray(upper, dtype=float))
        if lower.shape != upper.shape:
            raise DimensionMismatch("lower/upper shapes differ")
        K = lower.shape[0]
        if lower.shape[1] != K:
            raise DimensionMismatch(
                f"dense bounds must be K x K over decision regions, got {lower.shape}"
            )
        u_lower = np.broadcast_to(np.asarray(u_lower, dtype=float), (K,)).copy()
        u_upper = np.broadcast_to(np.asarray(u_upper, dtype=float), (K,)).copy()
        keep = upper >= SPARSITY_THRESHOLD
        indptr = np.zeros(K + 1, dtype=np.int64)
        idx_list, lo_list, up_list = [], [], []
        for i in range(K):
            cols = np.nonzero(keep[i])[0]
            idx_list.append(cols)
            lo_list.append(lower[i, cols])
            up_list.append(upper[i, cols])
            indptr[i + 1] = indptr[i] + cols.shape[0]
        indices = np.concatenate(idx_list) if idx_list else np.zeros(0, dtype=np.int64)
        lo = np.concatenate(lo_list) if lo_list else np.zeros(0)
        up = np.concatenate(up_list) if up_list else np.zeros(0)
        return cls(K, indptr, indices, lo, up, u_lower, u_upper)

    @classmethod
    def from_entries(cls, K, entries, u_lower=None, u_upper=None) -> "TransitionBounds":
        """Build from (i, j, lower, upper) triplets with 0-based indices; j == K means unsafe."""
        K = int(K)
        u_lo = np.zeros(K)
        u_up = np.zeros(K)
        if u_lower is not None:
            u_lo = np.broadcast_to(np.asarray(u_lower, float), (K,)).copy()
        if u_upper is not None:
            u_up = np.broadcast_to(np.asarray(u_upper, float), (K,)).copy()
        per_row: list = [dict() for _ in range(K)]
        for (i, j, lo, up) in entries:
            i = int(i)
            if not 0 <= i < K:
                raise InvariantViolation(f"row index {i} out of range for K={K}")
            if j == K or j == "u":
                u_lo[i], u_up[i] = float(lo), float(up)
                continue
            j = int(j)
            if not 0 <= j < K:
                raise InvariantViolation(f"column index {j} out of range for K={K}")
            if j in per_row[i]:
                raise InvariantViolation(f"duplicate entry for pair ({i}, {j})")
            per_row[i][j] = (float(lo), float(up))
        indptr = np.zeros(K + 1, dtype=np.int64)
        idx_list, lo_list, up_list = [], [], []
        for i in range(K):
            cols = np.array(sorted(per_row[i]), dtype=np.int64)
            vals = np.array([per_row[i][int(j)] for j in cols], dtype=float).reshape(-1, 2)
            keep = vals[:, 1] >= SPARSITY_THRESHOLD if cols.size else np.zeros(0, bool)
            cols = cols[keep]
            idx_list.append(cols)
            lo_list.append(vals[keep, 0])
            up_list.append(vals[keep, 1])
            indptr[i + 1] = indptr[i] + cols.shape[0]
        indices = np.concatenate(idx_list) if idx_list else np.zeros(0, dtype=np.int64)
        lo = np.concatenate(lo_list) if lo_list else np.zeros(0)
        up = np.concatenate(up_list) if up_list else np.zeros(0)
        return cls(K, indptr, indices, lo, up, u_lo, u_up)

    # ----- views and checks ----------------------------------------------

    @property
    def nnz(self) -> int:
        return int(self.indices.shape[0])

    def row_slice(self, i: int) -> slice:
        return slice(int(self.indptr[i]), int(self.indptr[i + 1]))

    def row_dense(self, i: int):
        """Dense (lower, upper) arrays of length K+1 for row i (unsafe last)."""
        lo = np.zeros(self.K + 1)
        up = np.zeros(self.K + 1)
        s = self.row_slice(i)
        lo[self.indices[s]] = self.lower[s]
        up[self.indices[s]] = self.upper[s]
        lo[self.K] = self.u_lower[i]
        up[self.K] = self.u_upper[i]
        return lo, up

    def row_lower_sums(self) -> np.ndarray:
        out = np.add.reduceat(
            np.append(self.lower, 0.0), self.indptr[:-1], dtype=float
        )
        out[np.diff(self.indptr) == 0] = 0.0
        return out + self.u_lower

    def row_upper_sums(self) -> np.ndarray:
        out = np.add.reduceat(
            np.append(self.upper, 0.0), self.indptr[:-1], dtype=float
        )
        out[np.diff(self.indptr) == 0] = 0.0
        return out + self.u_upper

    def validate(self):
        if self.indptr.shape != (self.K + 1,) or self.indptr[0] != 0:
            raise InvariantViolation("bad indptr")
        if np.any(np.diff(self.indptr) < 0) or self.indptr[-1] != self.indices.shape[0]:
            raise InvariantViolation("bad indptr")
        if self.lower.shape != self.indices.shape or self.upper.shape != self.indices.shape:
            raise InvariantViolation("CSR array lengths differ")
        if self.u_lower.shape != (self.K,) or self.u_upper.shape != (self.K,):
            raise InvariantViolation("unsafe column length != K")
        if self.indices.size and (self.indices.min() < 0 or self.indices.max() >= self.K):
            raise InvariantViolation("column index out of range")
        for name, lo, up in (
            ("entry", self.lower, self.upper),
            ("unsafe", self.u_lower, self.u_upper),
        ):
            if np.any(lo < 0) or np.any(up > 1) or np.any(lo > up):
                bad = np.nonzero((lo < 0) | (up > 1) | (lo > up))[0]
                raise InvariantViolation(
                    f"{name} interval out of [0,1] or inverted at position {bad[:5]}"
                )
        los = self.row_lower_sums()
        ups = self.row_upper_sums()
        bad = np.nonzero((los > 1.0 + 1e-12) | (ups < 1.0 - 1e-12))[0]
        if bad.size:
            i = int(bad[0])
            raise InfeasibleRow(
                f"row {i} infeasible: sum(lower)={los[i]!r}, sum(upper)={ups[i]!r}"
            )

    def pairs(self):
        """Iterate (i, j, lower, upper) with j in 0..K-1 plus (i, 'u', lo, up)."""
        for i in range(self.K):
            s = self.row_slice(i)
            for j, lo, up in zip(self.indices[s], self.lower[s], self.upper[s]):
                yield (i, int(j), float(lo), float(up))
            yield (i, "u", float(self.u_lower[i]), float(self.u_upper[i]))

    def __eq__(self, other):
        if not isinstance(other, TransitionBounds):
            return NotImplemented
        return (
            self.K == other.K
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.lower, other.lower)
            and np.array_equal(self.upper, other.upper)
            and np.array_equal(self.u_lower, other.u_lower)
            and np.array_equal(self.u_upper, other.u_upper)
        )


# ----- core bound computation ---------------------------------------------


def _axis_factors(edges: np.ndarray, m_lo: np.ndarray, m_hi: np.ndarray, sigma: float):
    """Per-cell extrema of g(m) = Phi((e_hi-m)/s) - Phi((e_lo-m)/s) for m in [m_lo, m_hi].

    g is unimodal in m with its peak at the cell midpoint, so the max is at
    the midpoint clamped into [m_lo, m_hi] and the min at one of the ends.
    Returns (fmax, fmin) of shape (len(m_lo), len(edges) - 1).
    """
    mids = 0.5 * (edges[:-1] + edges[1:])
    m_lo = np.asarray(m_lo, dtype=float)[:, None]
    m_hi = np.asarray(m_hi, dtype=float)[:, None]
    m_star = np.clip(mids[None, :], m_lo, m_hi)

    def g(m):
        return ndtr((edges[1:][None, :] - m) / sigma) - ndtr(
            (edges[:-1][None, :] - m) / sigma
        )

    fmax = g(m_star)
    fmin = np.minimum(g(m_lo), g(m_hi))
    return np.clip(fmax, 0.0, 1.0), np.clip(fmin, 0.0, 1.0)


def _domain_factors(domain: Box, m_lo: np.ndarray, m_hi: np.ndarray, sigma: np.ndarray):
    """Extrema of the probability of landing anywhere in the domain box."""
    n_rows = m_lo.shape[0]
    smax = np.ones(n_rows)
    smin = np.ones(n_rows)
    for d in range(domain.dim):
        edges = np.array([domain.lo[d], domain.hi[d]])
        fmax, fmin = _axis_factors(edges, m_lo[:, d], m_hi[:, d], float(sigma[d]))
        smax *= fmax[:, 0]
        smin *= fmin[:, 0]
    return smax, smin


def _repair_row(lo_vals: np.ndarray, u_lo: float, up_vals: np.ndarray, u_up: float, i: int):
    """Make row feasibility exact in float arithmetic.

    The factor products satisfy sum(lower) <= 1 <= sum(upper) mathematically;
    rounding can break the float sums by a few ulps.  Widening the unsafe
    column (or scaling the lower entries down) is sound.  Drift above
    _ROW_REPAIR_TOL means the row is genuinely infeasible.
    """
    up_sum = float(up_vals.sum())
    deficit = 1.0 - (up_sum + u_up)
    if deficit > 0:
        if deficit > _ROW_REPAIR_TOL:
            raise InfeasibleRow(f"row {i}: sum of upper bounds {up_sum + u_up!r} < 1")
        u_up = min(1.0, u_up + deficit)
        while up_sum + u_up < 1.0 and u_up < 1.0:
            u_up = np.nextafter(u_up, np.inf)
        if up_sum + u_up < 1.0:
            raise InfeasibleRow(f"row {i}: sum of upper bounds cannot reach 1")
    lo_sum = float(lo_vals.sum())
    excess = (lo_sum + u_lo) - 1.0
    if excess > 0:
        if excess > _ROW_REPAIR_TOL + u_lo:
            raise InfeasibleRow(f"row {i}: sum of lower bounds {lo_sum + u_lo!r} > 1")
        u_lo = max(0.0, u_lo - excess)
        while lo_sum + u_lo > 1.0 and u_lo > 0.0:
            u_lo = np.nextafter(u_lo, -np.inf)
        while lo_vals.sum() + u_lo > 1.0:
            # u_lo is already 0 and the entry lowers alone drift past 1
            if lo_vals.sum() - 1.0 > _ROW_REPAIR_TOL:
                raise InfeasibleRow(f"row {i}: sum of lower bounds {lo_vals.sum()!r} > 1")
            lo_vals = lo_vals * (1.0 - 1e-15)
    return lo_vals, u_lo, u_up


def _image_rows(m_lo: np.ndarray, m_hi: np.ndarray, partition: Partition, sigma: np.ndarray):
    """Per-row sparse interval bounds from mean-image intervals.

    Yields (cols, lower, upper, u_lo, u_up) per row, with cols as positions
    in the decision vector.
    """
    dim = partition.dim
    counts = partition.counts
    dec_pos = partition.decision_position

    unsafe_mask = np.zeros(partition.n_cells, dtype=bool)
    if partition.unsafe_indices:
        unsafe_mask[np.fromiter(partition.unsafe_indices, dtype=np.int64)] = True
    n_unsafe_total = int(unsafe_mask.sum())

    fmax_d, fmin_d = [], []
    for d in range(dim):
        fmax, fmin = _axis_factors(partition.edges[d], m_lo[:, d], m_hi[:, d], float(sigma[d]))
        fmax_d.append(fmax)
        fmin_d.append(fmin)
    smax, smin = _domain_factors(partition.domain, m_lo, m_hi, sigma)

    for r in range(m_lo.shape[0]):
        sups = [np.nonzero(fmax_d[d][r] >= SPARSITY_THRESHOLD)[0] for d in range(dim)]
        if any(s.size == 0 for s in sups):
            prod_up = np.zeros(0)
            prod_lo = np.zeros(0)
            flat = np.zeros(0, dtype=np.int64)
        else:
            prod_up = reduce(np.multiply.outer, [fmax_d[d][r][sups[d]] for d in range(dim)]).ravel()
            prod_lo = reduce(np.multiply.outer, [fmin_d[d][r][sups[d]] for d in range(dim)]).ravel()
            mesh = np.meshgrid(*sups, indexing="ij")
            flat = np.ravel_multi_index([m.ravel() for m in mesh], counts)

        if flat.size:
            in_unsafe = unsafe_mask[flat]
            sum_unsafe_up = float(prod_up[in_unsafe].sum())
            sum_unsafe_lo = float(prod_lo[in_unsafe].sum())
            n_unsafe_seen = int(in_unsafe.sum())
            keep = (~in_unsafe) & (prod_up >= SPARSITY_THRESHOLD)
        else:
            sum_unsafe_up = sum_unsafe_lo = 0.0
            n_unsafe_seen = 0
            keep = np.zeros(0, dtype=bool)
        # unsafe cells outside the per-dimension support each contribute < threshold
        pad_up = SPARSITY_THRESHOLD * (n_unsafe_total - n_unsafe_seen)

        cols_grid = flat[keep]
        order = np.argsort(cols_grid)
        cols = dec_pos[cols_grid[order]]
        up_vals = np.minimum(prod_up[keep][order], 1.0)
        lo_vals = np.minimum(prod_lo[keep][order], up_vals)

        u_up = min(1.0, max(0.0, 1.0 - smin[r] + sum_unsafe_up + pad_up))
        u_lo = max(0.0, 1.0 - smax[r] + sum_unsafe_lo)
        u_lo = min(u_lo, u_up)
        lo_vals, u_lo, u_up = _repair_row(lo_vals, u_lo, up_vals, u_up, r)
        yield cols, lo_vals, up_vals, u_lo, u_up


def _bounds_from_images(m_lo: np.ndarray, m_hi: np.ndarray, partition: Partition,
                        sigma: np.ndarray) -> TransitionBounds:
    K = partition.K
    if m_lo.shape[0] != K:
        raise DimensionMismatch("one mean image per decision region required")
    indptr = np.zeros(K + 1, dtype=np.int64)
    idx_chunks, lo_chunks, up_chunks = [], [], []
    u_lower = np.zeros(K)
    u_upper = np.zeros(K)
    for r, (cols, lo_vals, up_vals, u_lo, u_up) in enumerate(
        _image_rows(m_lo, m_hi, partition, sigma)
    ):
        idx_chunks.append(cols)
        lo_chunks.append(lo_vals)
        up_chunks.append(up_vals)
        u_lower[r] = u_lo
        u_upper[r] = u_up
        indptr[r + 1] = indptr[r] + cols.shape[0]
    indices = np.concatenate(idx_chunks) if idx_chunks else np.zeros(0, np.int64)
    lower = np.concatenate(lo_chunks) if lo_chunks else np.zeros(0)
    upper = np.concatenate(up_chunks) if up_chunks else np.zeros(0)
    return TransitionBounds(K, indptr, indices, lower, upper, u_lower, u_upper)


def transition_row(image: Box, partition: Partition, sigma) -> tuple:
    """Interval bounds for a single source whose mean image is ``image``.

    Returns (indices, lower, upper, u_lower, u_upper) with indices as
    positions in the decision vector.  The batched constructors below share
    the same arithmetic; this entry point exists so refinement behaviour
    can be studied on individual sources.
    """
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), (partition.dim,)).astype(float)
    rows = list(_image_rows(image.lo[None, :], image.hi[None, :], partition, sigma))
    return rows[0]


def affine_bounds(model: Affine, partition: Partition) -> TransitionBounds:
    """Transition bounds for an affine system over a grid partition.

    The mean image of each cell is the exact interval hull of A x + c over
    the cell box, obtained by splitting A into positive and negative parts.
    """
    if model.dim != partition.dim:
        raise DimensionMismatch(
            f"system dim {model.dim} does not match partition dim {partition.dim}"
        )
    los, his = partition.cell_corners(partition.decision_indices)
    Apos = np.clip(model.A, 0.0, None)
    Aneg = np.clip(model.A, None, 0.0)
    m_lo = los @ Apos.T + his @ Aneg.T + model.c
    m_hi = his @ Apos.T + los @ Aneg.T + model.c
    return _bounds_from_images(m_lo, m_hi, partition, model.sigma)


def interval_map_bounds(model: IntervalMap, partition: Partition) -> TransitionBounds:
    """Transition bounds from externally supplied per-region image boxes."""
    sigma = np.broadcast_to(model.sigma, (partition.dim,))
    K = partition.K
    m_lo = np.empty((K, partition.dim))
    m_hi = np.empty((K, partition.dim))
    for pos, gi in enumerate(partition.decision_indices):
        img = model.images.get(int(gi))
        if img is None:
            raise MissingImage(f"no image box for decision region {int(gi)}")
        if img.dim != partition.dim:
            raise DimensionMismatch(f"image for region {int(gi)} has dim {img.dim}")
        m_lo[pos] = img.lo
        m_hi[pos] = img.hi
    return _bounds_from_images(m_lo, m_hi, partition, sigma)


# ----- serialization --------------------------------------------------------


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def export_bounds(bounds: TransitionBounds, path, fmt: Union[str, None] = None) -> None:
    """Write bounds as CSV (i,j,lower,upper; 1-based, j may be "u") or JSON."""
    path = str(path)
    if fmt is None:
        fmt = "json" if path.endswith(".json") else "csv"
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["i", "j", "lower", "upper"])
            for (i, j, lo, up) in bounds.pairs():
                jtxt = "u" if j == "u" else str(j + 1)
                w.writerow([str(i + 1), jtxt, _fmt(lo), _fmt(up)])
    elif fmt == "json":
        entries = []
        for (i, j, lo, up) in bounds.pairs():
            entries.append(
                {"i": i + 1, "j": "u" if j == "u" else j + 1, "lower": lo, "upper": up}
            )
        with open(path, "w") as fh:
            json.dump({"K": bounds.K, "entries": entries}, fh, indent=1)
            fh.write("\n")
    else:
        raise ParseError(f"unknown bounds format {fmt!r}")


def _entries_to_bounds(K: int, raw_entries, u_lo: np.ndarray, u_up: np.ndarray):
    entries = []
    for (i, j, lo, up) in raw_entries:
        if not (np.isfinite(lo) and np.isfinite(up)):
            raise InvariantViolation(f"non-finite bound in entry ({i}, {j})")
        if lo < 0 or up > 1 or lo > up:
            raise InvariantViolation(
                f"entry ({i}, {j}) violates 0 <= lower <= upper <= 1: [{lo!r}, {up!r}]"
            )
        entries.append((i, j, lo, up))
    return TransitionBounds.from_entries(K, entries, u_lo, u_up)


def import_bounds(path, fmt: Union[str, None] = None) -> TransitionBounds:
    """Read bounds written by export_bounds; validates all constructor invariants."""
    path = str(path)
    if fmt is None:
        fmt = "json" if path.endswith(".json") else "csv"
    raw = []
    max_i = 0
    if fmt == "csv":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        start = 0
        if rows and rows[0][:2] == ["i", "j"]:
            start = 1
        for ln, row in enumerate(rows[start:], start=start + 1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 4:
                raise ParseError(f"{path}:{ln}: expected 4 fields, got {len(row)}")
            try:
                i = int(row[0])
                j = "u" if row[1].strip() == "u" else int(row[1])
                lo = float(row[2])
                up = float(row[3])
            except ValueError as exc:
                raise ParseError(f"{path}:{ln}: {exc}") from None
            if i < 1 or (j != "u" and j < 1):
                raise ParseError(f"{path}:{ln}: indices are 1-based")
            raw.append((i - 1, "u" if j == "u" else j - 1, lo, up))
            max_i = max(max_i, i)
        K = max_i
    else:
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: invalid JSON at line {exc.lineno}") from None
        if not isinstance(doc, dict) or "K" not in doc or "entries" not in doc:
            raise ParseError(f"{path}: expected an object with 'K' and 'entries'")
        K = int(doc["K"])
        for n, ent in enumerate(doc["entries"]):
            try:
                i = int(ent["i"])
                j = ent["j"]
                j = "u" if j == "u" else int(j)
                lo = float(ent["lower"])
                up = float(ent["upper"])
            except (KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"{path}: entry {n}: {exc}") from None
            if i < 1 or i > K or (j != "u" and not 1 <= j <= K):
                raise ParseError(f"{path}: entry {n}: index out of range")
            raw.append((i - 1, "u" if j == "u" else j - 1, lo, up))
    if K < 1:
        raise ParseError(f"{path}: no rows found")
    ent = [(i, j, lo, up) for (i, j, lo, up) in raw if j != "u"]
    u_lo = np.zeros(K)
    u_up = np.zeros(K)
    for (i, j, lo, up) in raw:
        if j == "u":
            if lo < 0 or up > 1 or lo > up:
                raise InvariantViolation(
                    f"unsafe entry for row {i + 1} violates 0 <= lower <= upper <= 1"
                )
            u_lo[i] = lo
            u_up[i] = up
    return _entries_to_bounds(K, ent, u_lo, u_up)
