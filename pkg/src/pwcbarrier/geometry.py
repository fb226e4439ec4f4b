"""Axis-aligned boxes and uniform grid partitions of the safe set.

The safe set is a box-shaped domain minus a finite list of box obstacles.
A partition chops the domain into a uniform grid; cells that overlap an
obstacle with positive volume are tagged unsafe and excluded from the
decision vector, cells that touch the initial set (closed intersection)
are tagged initial.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np

__all__ = [
    "Box",
    "Partition",
    "make_grid",
    "region_of",
    "GeometryError",
    "DimensionMismatch",
    "ZeroCount",
    "InitialOutsideDomain",
    "InitialIntersectsObstacle",
]


class GeometryError(ValueError):
    """Base class for partition construction errors."""


class DimensionMismatch(GeometryError):
    pass


class ZeroCount(GeometryError):
    pass


class InitialOutsideDomain(GeometryError):
    pass


class InitialIntersectsObstacle(GeometryError):
    pass


@dataclass(frozen=True)
class Box:
    """Closed axis-aligned box [lo, hi]. Degenerate faces (lo == hi) are allowed."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if lo.ndim != 1 or lo.shape != hi.shape:
            raise DimensionMismatch(f"box corners have shapes {lo.shape} and {hi.shape}")
        if not np.all(np.isfinite(lo)) or not np.all(np.isfinite(hi)):
            raise GeometryError("box corners must be finite")
        if np.any(lo > hi):
            raise GeometryError(f"box has lo > hi: lo={lo}, hi={hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return self.lo.shape[0]

    @property
    def widths(self) -> np.ndarray:
        return self.hi - self.lo

    @property
    def volume(self) -> float:
        return float(np.prod(self.widths))

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    def contains_point(self, x, tol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lo - tol) and np.all(x <= self.hi + tol))

    def contains_box(self, other: "Box") -> bool:
        return bool(np.all(other.lo >= self.lo) and np.all(other.hi <= self.hi))

    def touches(self, other: "Box") -> bool:
        """Closed-set intersection test (shared faces and corners count)."""
        return bool(np.all(self.lo <= other.hi) and np.all(other.lo <= self.hi))

    def overlaps(self, other: "Box") -> bool:
        """Positive-volume intersection test."""
        return bool(
            np.all(np.maximum(self.lo, other.lo) < np.minimum(self.hi, other.hi))
        )

    def intersect(self, other: "Box") -> Union["Box", None]:
        lo = np.maximum(self.lo, other.lo)
        hi = np.minimum(self.hi, other.hi)
        if np.any(lo > hi):
            return None
        return Box(lo, hi)


@dataclass(frozen=True)
class Partition:
    """Uniform grid over ``domain`` with initial/unsafe cell tags.

    Cells are indexed in row-major (C) order over the per-dimension counts,
    so the last dimension varies fastest.  ``decision_indices`` lists the
    cells that are not unsafe-tagged, in ascending order; positions into
    that list are the coordinates of the barrier vector b.
    """

    domain: Box
    counts: tuple
    edges: tuple  # per-dimension arrays of length counts[d] + 1
    initial: Box
    obstacles: tuple
    initial_indices: frozenset
    unsafe_indices: frozenset
    decision_indices: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.counts))

    @property
    def K(self) -> int:
        """Number of decision regions."""
        return int(self.decision_indices.shape[0])

    def cell_box(self, index: int) -> Box:
        multi = np.unravel_index(index, self.counts)
        lo = np.array([self.edges[d][i] for d, i in enumerate(multi)])
        hi = np.array([self.edges[d][i + 1] for d, i in enumerate(multi)])
        return Box(lo, hi)

    def cell_corners(self, indices) -> tuple:
        """Vectorized (lo, hi) corner arrays for the given flat cell indices."""
        multi = np.unravel_index(np.asarray(indices, dtype=np.int64), self.counts)
        lo = np.stack([self.edges[d][m] for d, m in enumerate(multi)], axis=-1)
        hi = np.stack([self.edges[d][m + 1] for d, m in enumerate(multi)], axis=-1)
        return lo, hi

    @property
    def decision_position(self) -> np.ndarray:
        """Map full-grid index -> position in the decision vector (-1 if unsafe)."""
        pos = np.full(self.n_cells, -1, dtype=np.int64)
        pos[self.decision_indices] = np.arange(self.K, dtype=np.int64)
        return pos

    @property
    def initial_decision_positions(self) -> np.ndarray:
        pos = self.decision_position
        out = np.sort(pos[np.fromiter(self.initial_indices, dtype=np.int64)])
        return out


def _axis_range_closed(edges: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Cells whose closed 1-d interval intersects [lo, hi]."""
    n = edges.shape[0] - 1
    return np.nonzero((edges[:-1] <= hi) & (edges[1:] >= lo))[0] if n else np.array([], int)


def _axis_range_open(edges: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Cells whose 1-d interval overlaps (lo, hi) with positive length."""
    n = edges.shape[0] - 1
    return np.nonzero((edges[:-1] < hi) & (edges[1:] > lo))[0] if n else np.array([], int)


def _flat_indices(counts, per_dim_ranges) -> Iterable[int]:
    if any(len(r) == 0 for r in per_dim_ranges):
        return []
    flats = []
    for combo in itertools.product(*per_dim_ranges):
        flats.append(int(np.ravel_multi_index(combo, counts)))
    return flats


def make_grid(
    domain: Box,
    counts: Sequence[int],
    initial: Box,
    obstacles: Sequence[Box] = (),
) -> Partition:
    """Build a uniform grid partition with initial/unsafe tags.

    The initial tag uses closed intersection (an initial box sitting on a
    cell face tags both neighbouring cells); the unsafe tag requires
    positive-volume overlap with an obstacle.  An initial cell that is
    also unsafe-tagged is a hard error: the certificate would be vacuous.
    """
    counts = tuple(int(c) for c in counts)
    if len(counts) != domain.dim:
        raise DimensionMismatch(
            f"domain dim {domain.dim} but {len(counts)} grid counts given"
        )
    if any(c < 1 for c in counts):
        raise ZeroCount(f"grid counts must be >= 1, got {counts}")
    if np.any(domain.lo >= domain.hi):
        raise GeometryError("domain must have positive volume in every dimension")
    if initial.dim != domain.dim:
        raise DimensionMismatch("initial set dimension does not match domain")
    if not domain.contains_box(initial):
        raise InitialOutsideDomain(
            f"initial box {initial.lo}..{initial.hi} is not contained in the domain"
        )
    obstacles = tuple(obstacles)
    for m, obs in enumerate(obstacles):
        if obs.dim != domain.dim:
            raise DimensionMismatch(f"obstacle {m} dimension does not match domain")

    edges = tuple(
        np.linspace(domain.lo[d], domain.hi[d], counts[d] + 1) for d in range(domain.dim)
    )

    init_ranges = [
        _axis_range_closed(edges[d], initial.lo[d], initial.hi[d])
        for d in range(domain.dim)
    ]
    initial_indices = frozenset(_flat_indices(counts, init_ranges))
    if not initial_indices:
        # cannot happen for an initial box inside the domain, kept as a guard
        raise InitialOutsideDomain("initial box tags no cells")

    unsafe: set = set()
    for obs in obstacles:
        ranges = [
            _axis_range_open(edges[d], obs.lo[d], obs.hi[d]) for d in range(domain.dim)
        ]
        unsafe.update(_flat_indices(counts, ranges))
    unsafe_indices = frozenset(unsafe)

    clash = initial_indices & unsafe_indices
    if clash:
        raise InitialIntersectsObstacle(
            f"cells {sorted(clash)} are tagged both initial and unsafe; "
            "refine the grid or move the initial set"
        )

    n_cells = int(np.prod(counts))
    mask = np.ones(n_cells, dtype=bool)
    if unsafe_indices:
        mask[np.fromiter(unsafe_indices, dtype=np.int64)] = False
    decision_indices = np.nonzero(mask)[0].astype(np.int64)

    return Partition(
        domain=domain,
        counts=counts,
        edges=edges,
        initial=initial,
        obstacles=obstacles,
        initial_indices=initial_indices,
        unsafe_indices=unsafe_indices,
        decision_indices=decision_indices,
    )


def region_of(partition: Partition, x) -> Union[int, str]:
    """Flat cell index containing x, or the string "unsafe".

    Points outside the domain and points in unsafe-tagged cells map to
    "unsafe".  A point on a shared cell face belongs to the lowest-index
    cell whose closed box contains it.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape[0] != partition.dim:
        raise DimensionMismatch(f"point has dim {x.shape[0]}, partition {partition.dim}")
    if not partition.domain.contains_point(x):
        return "unsafe"
    multi = []
    for d in range(partition.dim):
        e = partition.edges[d]
        i = int(np.searchsorted(e, x[d], side="left")) - 1
        i = min(max(i, 0), partition.counts[d] - 1)
        multi.append(i)
    flat = int(np.ravel_multi_index(tuple(multi), partition.counts))
    if flat in partition.unsafe_indices:
        return "unsafe"
    return flat
