"""Built-in benchmark systems.

Six named systems cover the library's intended range: a 2D linear system
with convex and obstacle-punctured safe sets, a 4D nonlinear unicycle under
a stabilizing feedback law, 6D lateral-vertical quadrotor guidance (convex
and with obstacles) and an 8D lateral-longitudinal quadrotor model.  Each
benchmark bundles the safety geometry, a transition-bounds builder, a
pointwise simulator for Monte Carlo validation and solver-friendly default
grid counts.

Continuous dynamics are discretized by the Euler method with dt = 0.01 and
perturbed by N(0, 1e-4 I) noise per step unless stated otherwise.  Feedback
gains are implementation defaults chosen to stabilize the stated
equilibria; they are recorded in each benchmark's config dict with
provenance "implementer-default" so reports can flag them as tunable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bounds import (
    Affine,
    ClosedForm,
    IntervalMap,
    TransitionBounds,
    affine_bounds,
    interval_map_bounds,
)
from .geometry import Box, Partition, make_grid

DT = 0.01
GRAVITY = 9.81


class UnknownBenchmark(ValueError):
    """Requested benchmark name is not registered."""


@dataclass(frozen=True)
class Benchmark:
    """A named system with safety geometry and bounds/simulation builders.

    ``model`` holds exact affine dynamics when the system is linear;
    nonlinear systems supply ``image_fn`` (cell box -> image box) plus
    ``sigma`` instead.  ``simulator`` always carries pointwise dynamics
    usable by validate.simulate.
    """

    name: str
    safe: Box
    initial: Box
    obstacles: tuple
    horizon: int
    default_counts: tuple
    model: Affine = None
    image_fn: object = None
    sigma: np.ndarray = None
    simulator: object = None
    config: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.safe.dim

    def partition(self, counts=None) -> Partition:
        counts = self.default_counts if counts is None else tuple(counts)
        return make_grid(self.safe, counts, self.initial, self.obstacles)

    def transition_bounds(self, partition: Partition) -> TransitionBounds:
        if self.model is not None:
            return affine_bounds(self.model, partition)
        imap = IntervalMap.from_function(partition, self.image_fn, self.sigma)
        return interval_map_bounds(imap, partition)

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "dim": self.dim,
            "safe": {"lo": self.safe.lo.tolist(), "hi": self.safe.hi.tolist()},
            "initial": {"lo": self.initial.lo.tolist(), "hi": self.initial.hi.tolist()},
            "obstacles": [
                {"lo": box.lo.tolist(), "hi": box.hi.tolist()} for box in self.obstacles
            ],
            "horizon": self.horizon,
            "default_counts": list(self.default_counts),
            "config": self.config,
        }


def _centered_box(center, half) -> Box:
    center = np.asarray(center, dtype=float)
    half = np.asarray(half, dtype=float)
    return Box(center - half, center + half)


# ----- 2D linear system ------------------------------------------------------


def _linear2d(name: str, obstacles: tuple, counts: tuple) -> Benchmark:
    model = Affine(A=0.5 * np.eye(2), c=np.zeros(2), sigma=np.full(2, 0.1))
    return Benchmark(
        name=name,
        safe=Box([-1.0, -0.5], [0.5, 0.5]),
        initial=Box([-0.8, -0.2], [-0.6, 0.0]),
        obstacles=obstacles,
        horizon=10,
        default_counts=counts,
        model=model,
        simulator=model,
        config={"A": "0.5 I", "sigma": 0.1},
    )


# ----- 4D unicycle -----------------------------------------------------------


def _interval_cos(lo: float, hi: float) -> tuple:
    """Exact range of cos over [lo, hi]."""
    vals = [math.cos(lo), math.cos(hi)]
    if math.floor(hi / (2 * math.pi)) >= math.ceil(lo / (2 * math.pi)):
        top = 1.0
    else:
        top = max(vals)
    if math.floor((hi - math.pi) / (2 * math.pi)) >= math.ceil((lo - math.pi) / (2 * math.pi)):
        bot = -1.0
    else:
        bot = min(vals)
    return bot, top


def _interval_sin(lo: float, hi: float) -> tuple:
    return _interval_cos(lo - 0.5 * math.pi, hi - 0.5 * math.pi)


def _interval_product(alo, ahi, blo, bhi) -> tuple:
    corners = (alo * blo, alo * bhi, ahi * blo, ahi * bhi)
    return min(corners), max(corners)


def _unicycle4d(k_omega: float = 1.0, k_accel: float = 1.0) -> Benchmark:
    """Unicycle under the damping law omega = -k_omega theta, a = -k_accel v."""

    def image_fn(cell: Box) -> Box:
        xlo, ylo, tlo, vlo = cell.lo
        xhi, yhi, thi, vhi = cell.hi
        clo, chi = _interval_cos(tlo, thi)
        slo, shi = _interval_sin(tlo, thi)
        dx_lo, dx_hi = _interval_product(vlo, vhi, clo, chi)
        dy_lo, dy_hi = _interval_product(vlo, vhi, slo, shi)
        t_scale = 1.0 - DT * k_omega
        v_scale = 1.0 - DT * k_accel
        lo = [xlo + DT * dx_lo, ylo + DT * dy_lo, t_scale * tlo, v_scale * vlo]
        hi = [xhi + DT * dx_hi, yhi + DT * dy_hi, t_scale * thi, v_scale * vhi]
        return Box(lo, hi)

    def step(x: np.ndarray) -> np.ndarray:
        pos_x, pos_y, theta, vel = x.T
        return np.stack(
            [
                pos_x + DT * vel * np.cos(theta),
                pos_y + DT * vel * np.sin(theta),
                theta * (1.0 - DT * k_omega),
                vel * (1.0 - DT * k_accel),
            ],
            axis=1,
        )

    safe = Box([-1.0, -0.5, -1.75, -0.5], [0.5, 1.0, 0.5, 1.0])
    ball = _centered_box([-0.5, -0.5, 0.0, 0.0], 0.01 * np.ones(4))
    initial = safe.intersect(ball)
    sigma = np.full(4, 0.01)
    return Benchmark(
        name="unicycle4d",
        safe=safe,
        initial=initial,
        obstacles=(),
        horizon=10,
        default_counts=(3, 3, 3, 3),
        image_fn=image_fn,
        sigma=sigma,
        simulator=ClosedForm(fn=step, sigma=sigma, name="unicycle4d"),
        config={
            "dt": DT,
            "controller": "omega = -k_omega*theta, a = -k_accel*v",
            "k_omega": k_omega,
            "k_accel": k_accel,
            "provenance": "implementer-default",
        },
    )


# ----- quadrotor guidance models ---------------------------------------------

# Gains place the closed-loop poles of each four-state chain at s = -2 and of
# the two-state vertical chain at a double pole s = -2.
LATERAL_GAINS = {"k1": 8.0, "k2": 24.0, "k3": 32.0 / GRAVITY, "k4": 0.5}
VERTICAL_GAINS = {"kz1": 4.0, "kz2": 4.0}
LONGITUDINAL_GAINS = {"l1": 8.0, "l2": 24.0, "l3": -32.0 / GRAVITY, "l4": 0.5}


def _lateral_block() -> np.ndarray:
    """Continuous-time closed loop of (y, v, phi, p); reference enters via c."""
    k1, k2, k3, k4 = (LATERAL_GAINS[k] for k in ("k1", "k2", "k3", "k4"))
    return np.array(
        [
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, GRAVITY, 0.0],
            [0.0, 0.0, 0.0, 1.0],
            [-k3 * k4, -k3, -k2, -k1],
        ]
    )


def _longitudinal_block() -> np.ndarray:
    """Continuous-time closed loop of (x, u, theta, q)."""
    l1, l2, l3, l4 = (LONGITUDINAL_GAINS[k] for k in ("l1", "l2", "l3", "l4"))
    return np.array(
        [
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, -GRAVITY, 0.0],
            [0.0, 0.0, 0.0, 1.0],
            [-l3 * l4, -l3, -l2, -l1],
        ]
    )


def _vertical_block() -> np.ndarray:
    kz1, kz2 = VERTICAL_GAINS["kz1"], VERTICAL_GAINS["kz2"]
    return np.array([[0.0, 1.0], [-kz1, -kz2]])


def _discrete_affine(a_cl: np.ndarray, x_eq: np.ndarray, sigma: float) -> Affine:
    """Euler discretization x' = (I + dt A_cl)(x - x_eq) + x_eq + noise."""
    A = np.eye(a_cl.shape[0]) + DT * a_cl
    c = x_eq - A @ x_eq
    return Affine(A=A, c=c, sigma=np.full(a_cl.shape[0], sigma))


def _quad6d(name: str, obstacles: tuple) -> Benchmark:
    a_cl = np.zeros((6, 6))
    a_cl[:4, :4] = _lateral_block()
    a_cl[4:, 4:] = _vertical_block()
    x_eq = np.array([1.0, 0.0, 0.0, 0.0, 2.0, 0.0])
    model = _discrete_affine(a_cl, x_eq, sigma=0.01)
    safe = Box(
        [-0.5, -1.0, -0.1, -0.1, -0.5, -0.5],
        [2.0, 1.0, 0.1, 0.1, 3.0, 1.5],
    )
    return Benchmark(
        name=name,
        safe=safe,
        initial=_centered_box(x_eq, 0.01 * np.ones(6)),
        obstacles=obstacles,
        horizon=10,
        default_counts=(2, 2, 2, 2, 4, 2),
        model=model,
        simulator=model,
        config={
            "dt": DT,
            "x_eq": x_eq.tolist(),
            "gains": {**LATERAL_GAINS, **VERTICAL_GAINS},
            "provenance": "implementer-default",
        },
    )


def _quad8d() -> Benchmark:
    a_cl = np.zeros((8, 8))
    a_cl[:4, :4] = _lateral_block()
    a_cl[4:, 4:] = _longitudinal_block()
    x_eq = np.array([1.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0])
    model = _discrete_affine(a_cl, x_eq, sigma=0.01)
    safe = Box(
        [-0.5, -1.0, -0.1, -0.1, -0.5, -0.5, -0.1, -0.1],
        [2.0, 1.0, 0.1, 0.1, 4.0, 1.5, 0.1, 0.1],
    )
    return Benchmark(
        name="quad8d",
        safe=safe,
        initial=_centered_box(x_eq, 0.01 * np.ones(8)),
        obstacles=(),
        horizon=10,
        default_counts=(2, 2, 2, 2, 2, 2, 2, 2),
        model=model,
        simulator=model,
        config={
            "dt": DT,
            "x_eq": x_eq.tolist(),
            "gains": {**LATERAL_GAINS, **LONGITUDINAL_GAINS},
            "provenance": "implementer-default",
        },
    )


def _build(name: str) -> Benchmark:
    if name == "linear2d_convex":
        return _linear2d(name, obstacles=(), counts=(15, 10))
    if name == "linear2d_obstacles":
        # x-counts must place a grid edge between the initial box (x <= -0.6)
        # and the obstacle column (x >= -0.57): 18, 25, 36, 43, 50, 60, ...
        obstacles = (
            _centered_box([-0.55, 0.30], [0.02, 0.02]),
            _centered_box([-0.55, -0.15], [0.02, 0.02]),
        )
        return _linear2d(name, obstacles=obstacles, counts=(25, 15))
    if name == "unicycle4d":
        return _unicycle4d()
    if name == "quad6d_convex":
        return _quad6d(name, obstacles=())
    if name == "quad6d_obstacles":
        obstacles = (
            _centered_box([1.0, 0.0, 0.0, 0.0, 1.0, 0.0], 0.01 * np.ones(6)),
            _centered_box([1.0, 0.0, 0.0, 0.0, 2.75, 0.0], 0.01 * np.ones(6)),
        )
        return _quad6d(name, obstacles=obstacles)
    if name == "quad8d":
        return _quad8d()
    raise UnknownBenchmark(
        f"unknown benchmark {name!r}; available: {', '.join(BENCHMARK_NAMES)}"
    )


BENCHMARK_NAMES = (
    "linear2d_convex",
    "linear2d_obstacles",
    "unicycle4d",
    "quad6d_convex",
    "quad6d_obstacles",
    "quad8d",
)


def benchmark(name: str) -> Benchmark:
    """Construct a registered benchmark by name."""
    return _build(name)
