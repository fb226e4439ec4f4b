"""Independent certificate checking and Monte Carlo safety estimation.

The checker re-evaluates every barrier condition directly against the raw
transition bounds through the worst-case distribution oracle and shares no
code with the synthesizers, so a solver bug cannot vouch for its own output.
The Monte Carlo half samples trajectories of a simulable model and wraps the
empirical safety frequency in a Wilson score interval, giving an external
consistency check on any certified lower bound.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .ambiguity import batch_worst_case
from .bounds import Affine, ClosedForm
from .geometry import DimensionMismatch

CHECK_TOL = 1e-8


class NotSimulable(ValueError):
    """The model carries no pointwise dynamics to sample trajectories from."""


@dataclass(frozen=True)
class ConditionResult:
    """Outcome of one barrier condition: signed worst violation and verdict."""

    passed: bool
    violation: float


@dataclass(frozen=True)
class CheckReport:
    """Per-condition results of an independent certificate check.

    ``violation`` is the largest signed constraint excess, so a comfortable
    margin shows up as a negative number.  Each condition passes exactly when
    its violation is at most ``tolerance``.
    """

    nonneg: ConditionResult
    initial: ConditionResult
    martingale: ConditionResult
    beta_consistency: ConditionResult
    bound_arithmetic: ConditionResult
    tolerance: float

    @property
    def passed(self) -> bool:
        return (
            self.nonneg.passed
            and self.initial.passed
            and self.martingale.passed
            and self.beta_consistency.passed
            and self.bound_arithmetic.passed
        )

    def conditions(self) -> dict:
        return {
            "nonneg": self.nonneg,
            "initial": self.initial,
            "martingale": self.martingale,
            "beta_consistency": self.beta_consistency,
            "bound_arithmetic": self.bound_arithmetic,
        }

    def to_json(self) -> dict:
        out = {
            name: {"passed": bool(res.passed), "violation": float(res.violation)}
            for name, res in self.conditions().items()
        }
        out["tolerance"] = float(self.tolerance)
        out["passed"] = bool(self.passed)
        return out


@dataclass(frozen=True)
class McEstimate:
    """Empirical safety frequency with a Wilson score confidence interval."""

    trajectories: int
    safe_count: int
    estimate: float
    wilson_lo: float
    wilson_hi: float
    horizon: int
    seed: int
    confidence: float = 0.99

    def __post_init__(self):
        if not self.wilson_lo <= self.estimate <= self.wilson_hi:
            raise ValueError("estimate must lie inside its Wilson interval")

    def to_json(self) -> dict:
        return {
            "trajectories": int(self.trajectories),
            "safe_count": int(self.safe_count),
            "estimate": float(self.estimate),
            "wilson_lo": float(self.wilson_lo),
            "wilson_hi": float(self.wilson_hi),
            "horizon": int(self.horizon),
            "seed": int(self.seed),
            "confidence": float(self.confidence),
        }


def _cond(violation: float, tol: float) -> ConditionResult:
    return ConditionResult(passed=bool(violation <= tol), violation=float(violation))


def _initial_positions(partition, K: int) -> np.ndarray:
    """Decision-vector positions of the initial regions, without solver code."""
    pos = getattr(partition, "initial_decision_positions", None)
    if pos is None:
        pos = np.asarray(sorted(int(i) for i in partition), dtype=np.int64)
    else:
        pos = np.asarray(pos, dtype=np.int64)
    if pos.size and (pos.min() < 0 or pos.max() >= K):
        raise DimensionMismatch(
            f"initial positions {pos.min()}..{pos.max()} outside 0..{K - 1}"
        )
    return pos


def check_certificate(cert, bounds, partition, tol: float = CHECK_TOL) -> CheckReport:
    """Re-verify every barrier condition of ``cert`` against raw bounds.

    Conditions checked, each reported with its worst signed violation:

    * nonneg: b_i >= 0 for every region.
    * initial: b_i <= eta on every initial region, and eta >= 0.
    * martingale: the worst-case expected next value of the barrier is at
      most b_i + beta_i in every region, with the worst case taken over the
      transition ambiguity set by the exact oracle.
    * beta_consistency: beta dominates every per-region beta_i and is
      nonnegative.
    * bound_arithmetic: safety_lower_bound equals max(0, 1 - (eta + N beta)).
    """
    b = np.asarray(cert.b, dtype=float)
    K = b.shape[0]
    if bounds.K != K:
        raise DimensionMismatch(f"certificate has K={K}, bounds have K={bounds.K}")
    init_pos = _initial_positions(partition, K)
    beta_i = np.asarray(cert.beta_per_region, dtype=float)
    if beta_i.shape != (K,):
        raise DimensionMismatch(
            f"beta_per_region has shape {beta_i.shape}, expected ({K},)"
        )

    v_nonneg = float(np.max(-b)) if K else 0.0

    if init_pos.size:
        v_initial = float(np.max(b[init_pos] - cert.eta))
    else:
        v_initial = 0.0
    v_initial = max(v_initial, -float(cert.eta))

    worst, _ = batch_worst_case(bounds, np.append(b, 1.0))
    v_mart = float(np.max(worst - b - beta_i))

    v_beta = max(float(np.max(beta_i - cert.beta)), -float(cert.beta))

    expected = max(0.0, 1.0 - (cert.eta + cert.N * cert.beta))
    v_bound = abs(float(cert.safety_lower_bound) - expected)

    return CheckReport(
        nonneg=_cond(v_nonneg, tol),
        initial=_cond(v_initial, tol),
        martingale=_cond(v_mart, tol),
        beta_consistency=_cond(v_beta, tol),
        bound_arithmetic=_cond(v_bound, tol),
        tolerance=tol,
    )


def wilson_interval(successes: int, trials: int, confidence: float = 0.99):
    """Wilson score interval for a binomial proportion."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if not 0 <= successes <= trials:
        raise ValueError(f"successes {successes} outside 0..{trials}")
    if not 0.0 < confidence < 1.0:
        raise ValueError("confidence must be in (0, 1)")
    z = float(ndtri(0.5 * (1.0 + confidence)))
    n = float(trials)
    phat = successes / n
    denom = 1.0 + z * z / n
    center = (phat + z * z / (2.0 * n)) / denom
    half = (z / denom) * np.sqrt(phat * (1.0 - phat) / n + z * z / (4.0 * n * n))
    lo = float(max(0.0, center - half))
    hi = float(min(1.0, center + half))
    # the endpoints are exact at the boundary counts; keep them free of rounding
    if successes == 0:
        lo = 0.0
    if successes == trials:
        hi = 1.0
    return lo, hi


def _safety_sets(spec):
    safe = getattr(spec, "safe", None)
    if safe is None:
        safe = getattr(spec, "domain", None)
    if safe is None:
        raise TypeError("spec must expose a 'safe' or 'domain' box")
    obstacles = tuple(getattr(spec, "obstacles", ()) or ())
    return safe, spec.initial, obstacles


def _safe_mask(x: np.ndarray, safe, obstacles) -> np.ndarray:
    ok = np.all((x >= safe.lo) & (x <= safe.hi), axis=1)
    for box in obstacles:
        ok &= ~np.all((x >= box.lo) & (x <= box.hi), axis=1)
    return ok


def _step_function(model):
    if isinstance(model, Affine):
        return model.mean_step, model.sigma
    if isinstance(model, ClosedForm):
        return model.fn, model.sigma
    raise NotSimulable(
        f"{type(model).__name__} carries no pointwise dynamics; "
        "only Affine and ClosedForm models can be simulated"
    )


def simulate(model, spec, horizon: int, trials: int = 100_000,
             seed: int = 0, confidence: float = 0.99) -> McEstimate:
    """Monte Carlo estimate of the probability of staying safe for ``horizon`` steps.

    Starting points are drawn uniformly from the initial box; each step adds
    independent N(0, diag(sigma^2)) noise to the model's pointwise image.  A
    trajectory counts as safe when all horizon+1 states, the starting point
    included, lie in the safe box and outside every obstacle.  The
    counter-based Philox generator keyed by ``seed`` makes the estimate
    reproducible bit for bit.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    step, sigma = _step_function(model)
    safe, initial, obstacles = _safety_sets(spec)
    dim = safe.dim

    rng = np.random.Generator(np.random.Philox(seed))
    x = rng.uniform(initial.lo, initial.hi, size=(trials, dim))
    alive = _safe_mask(x, safe, obstacles)
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(horizon):
            x = np.asarray(step(x), dtype=float)
            x = x + rng.standard_normal((trials, dim)) * sigma
            alive &= _safe_mask(x, safe, obstacles)

    safe_count = int(np.count_nonzero(alive))
    lo, hi = wilson_interval(safe_count, trials, confidence)
    return McEstimate(
        trajectories=trials,
        safe_count=safe_count,
        estimate=safe_count / trials,
        wilson_lo=lo,
        wilson_hi=hi,
        horizon=horizon,
        seed=seed,
        confidence=confidence,
    )
