"""Shared fixtures: randomized ambiguity rows and synthesis instances."""

import numpy as np
import pytest

from pwcbarrier.ambiguity import AmbiguitySet
from pwcbarrier.bounds import TransitionBounds


def random_ambiguity_row(rng, n: int) -> AmbiguitySet:
    """A feasible interval row over n destinations with wide, messy intervals."""
    nominal = rng.dirichlet(np.full(n, 0.8))
    spread = rng.uniform(0.0, 0.6, size=n)
    lower = np.clip(nominal - spread * nominal, 0.0, 1.0)
    upper = np.clip(nominal + spread * (1.0 - nominal), 0.0, 1.0)
    # degenerate coordinates keep the pivot/tie paths exercised
    exact = rng.random(n) < 0.15
    lower[exact] = upper[exact] = nominal[exact]
    if lower.sum() > 1.0:
        lower = lower / lower.sum()
    if upper.sum() < 1.0:
        upper = np.clip(upper + (1.0 - upper.sum()) / n + 1e-9, 0.0, 1.0)
    return AmbiguitySet(lower, upper)


def adversarial_bounds(rng, K: int) -> TransitionBounds:
    """Wide-interval rows where worst-case mass can pile onto the unsafe slot."""
    rows = [random_ambiguity_row(rng, K + 1) for _ in range(K)]
    lower = np.vstack([r.lower[:K] for r in rows])
    upper = np.vstack([r.upper[:K] for r in rows])
    u_lower = np.array([r.lower[K] for r in rows])
    u_upper = np.array([r.upper[K] for r in rows])
    return TransitionBounds.from_dense(lower, upper, u_lower, u_upper)


def certifiable_instance(rng):
    """A synthesis instance in the regime the solvers target.

    Rows concentrate their mass on few destinations (like grid abstractions
    of stable dynamics), leak at most 1e-3 to the unsafe destination and
    carry interval widths up to 5% relative.  Optimal objectives land in
    roughly [0.004, 0.03], so near-optimality bands are meaningful.

    Returns (bounds, initial_positions, horizon).
    """
    K = int(rng.integers(2, 31))
    n_init = int(rng.integers(1, max(K // 3, 1) + 1))
    init = np.sort(rng.choice(K, size=n_init, replace=False))
    horizon = int(rng.integers(5, 16))

    base = rng.dirichlet(np.full(K, 0.15), size=K)
    leak = rng.uniform(0.0, 1e-3, size=K)
    base = base * (1.0 - leak)[:, None]
    width = rng.uniform(0.0, 0.05, size=(K, K))
    upper = np.minimum(base + width * np.maximum(base, 0.02), 1.0)
    bounds = TransitionBounds.from_dense(base, upper, np.zeros(K), leak)
    return bounds, init, horizon


def two_region_instance():
    """Two grid cells, exact rows: jump 0 -> 1, then stay in 1 with 5% exit.

    The initial box equals cell 0, and the closed-intersection rule tags
    cell 1 as initial too (they share the face x = 1), so eta = max(b0, b1).
    Hand minimization of max(b0, b1) + 10*max(b1 - b0, 0.05 - 0.05*b1, 0)
    over [0,1]^2 gives exactly 0.5 at b = (0, 0): raising b1 trades the
    region-1 slack 0.05*(1 - b1) against eta and the region-0 slack at a
    net loss.  A 1e-3 grid oracle over [0,1]^2 confirms it.
    """
    from pwcbarrier.geometry import Box, make_grid

    partition = make_grid(Box([0.0], [2.0]), (2,), Box([0.0], [1.0]))
    bounds = TransitionBounds.from_dense(
        lower=[[0.0, 1.0], [0.0, 0.95]],
        upper=[[0.0, 1.0], [0.0, 0.95]],
        u_lower=[0.0, 0.05],
        u_upper=[0.0, 0.05],
    )
    return bounds, partition, 10


@pytest.fixture
def rng():
    return np.random.default_rng(20240814)


@pytest.fixture
def two_region():
    return two_region_instance()


def convexity_violation(value_fn, rng, K: int, n_triples: int) -> float:
    """Worst midpoint-above-chord excess of value_fn over random segments."""
    worst = -np.inf
    for _ in range(n_triples):
        b1 = rng.uniform(0.0, 1.0, size=K)
        b2 = rng.uniform(0.0, 1.0, size=K)
        t = float(rng.uniform())
        mid = value_fn(t * b1 + (1.0 - t) * b2)
        chord = t * value_fn(b1) + (1.0 - t) * value_fn(b2)
        worst = max(worst, mid - chord)
    return worst


def fd_gradient_errors(bounds, init_pos, horizon, rng, n_points: int, h: float = 1e-6):
    """Central differences vs the analytic subgradient at stable points.

    A sample point counts as stable when every worst-case argmax keeps the
    same vertex structure across all probed perturbations and no martingale
    gap sits within 10h of its clamp at zero; the smoothed objective is
    differentiable there.  Returns (worst relative error, points checked).
    """
    from pwcbarrier.ambiguity import batch_worst_case
    from pwcbarrier.synth import smoothed_loss_and_grad

    K = bounds.K
    checked = 0
    worst = 0.0
    attempts = 0

    def structure(b):
        vals, batch = batch_worst_case(bounds, np.append(b, 1.0))
        return vals, batch.dests, batch.probs

    while checked < n_points and attempts < 50 * n_points:
        attempts += 1
        b = rng.uniform(0.02, 0.98, size=K)
        vals, dests, probs = structure(b)
        if np.min(np.abs(vals - b)) <= 10 * h:
            continue
        _, grad = smoothed_loss_and_grad(b, bounds, init_pos, horizon)
        fd = np.zeros(K)
        stable = True
        for j in range(K):
            hi = b.copy()
            lo = b.copy()
            hi[j] += h
            lo[j] -= h
            ok = True
            for probe in (hi, lo):
                pv, pd, pp = structure(probe)
                if not (np.array_equal(pd, dests) and np.array_equal(pp, probs)):
                    ok = False
                    break
                if np.min(np.abs(pv - probe)) <= 2 * h:
                    ok = False
                    break
            if not ok:
                stable = False
                break
            f_hi, _ = smoothed_loss_and_grad(hi, bounds, init_pos, horizon)
            f_lo, _ = smoothed_loss_and_grad(lo, bounds, init_pos, horizon)
            fd[j] = (f_hi - f_lo) / (2.0 * h)
        if not stable:
            continue
        checked += 1
        err = np.abs(fd - grad) / np.maximum(1.0, np.abs(grad))
        worst = max(worst, float(err.max()))
    return worst, checked
