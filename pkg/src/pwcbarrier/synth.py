"""Certificate synthesis.

Three interchangeable solvers produce a piecewise-constant barrier b over
the decision regions, the initial level eta and the expectation slack beta:

* synth_dual  - one exact LP over (b, eta, beta, beta_i, lambda_i) obtained
  by dualizing the inner worst-case expectation of every region.
* synth_cegs  - counterexample-guided synthesis: a small outer LP over
  pooled worst-case distributions, grown by an exact separation oracle.
* synth_gd    - projected subgradient descent on a smoothed loss; fast and
  approximate, intended for large partitions.

All three return a Certificate whose eta and beta_per_region are recomputed
from the separation oracle, so independent checking never depends on solver
internals.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .ambiguity import AmbiguitySet, batch_gaps, batch_worst_case, sample_feasible
from .bounds import TransitionBounds
from .geometry import DimensionMismatch
from .lp import LinearProgram, LPFailure, solve_lp

__all__ = [
    "Certificate",
    "DualSolution",
    "GDConfig",
    "SynthesisError",
    "IterationCapExceeded",
    "safety_bound",
    "loss",
    "smoothed_loss_and_grad",
    "init_barrier",
    "synth_dual",
    "synth_cegs",
    "synth_gd",
]


class SynthesisError(ValueError):
    pass


class IterationCapExceeded(SynthesisError):
    pass


def safety_bound(eta: float, beta: float, horizon: int) -> float:
    """Lower bound on the probability of staying safe for ``horizon`` steps."""
    return max(0.0, 1.0 - (float(eta) + horizon * float(beta)))


def _init_positions(partition, K: int) -> np.ndarray:
    """Initial-region positions from a Partition or a raw index collection."""
    if hasattr(partition, "initial_decision_positions"):
        pos = np.asarray(partition.initial_decision_positions, dtype=np.int64)
    else:
        pos = np.unique(np.asarray(list(partition), dtype=np.int64))
    if pos.size == 0:
        raise SynthesisError("no initial regions: the synthesis problem is vacuous")
    if pos.min() < 0 or pos.max() >= K:
        raise SynthesisError(f"initial position out of range 0..{K - 1}")
    return pos


@dataclass
class Certificate:
    """A synthesized barrier: values b, level eta, slack beta and the bound."""

    solver: str
    K: int
    N: int
    eta: float
    beta: float
    beta_per_region: np.ndarray
    b: np.ndarray
    safety_lower_bound: float
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.b = np.asarray(self.b, dtype=float)
        self.beta_per_region = np.asarray(self.beta_per_region, dtype=float)
        if self.b.shape != (self.K,) or self.beta_per_region.shape != (self.K,):
            raise DimensionMismatch("certificate arrays must have length K")

    @property
    def objective(self) -> float:
        return float(self.eta + self.N * self.beta)

    def as_dict(self) -> dict:
        return {
            "solver": self.solver,
            "K": self.K,
            "N": self.N,
            "eta": self.eta,
            "beta": self.beta,
            "beta_per_region": [float(v) for v in self.beta_per_region],
            "b": [float(v) for v in self.b],
            "safety_lower_bound": self.safety_lower_bound,
            "diagnostics": self.diagnostics,
        }

    def to_json(self, path) -> None:
        with open(str(path), "w") as fh:
            json.dump(self.as_dict(), fh, indent=1)
            fh.write("\n")

    def to_csv(self, path) -> None:
        """Write one `region_index,b` line per decision region (heat-map input)."""
        with open(str(path), "w") as fh:
            fh.write("region_index,b\n")
            for i, value in enumerate(self.b):
                fh.write(f"{i},{format(float(value), '.17g')}\n")

    @classmethod
    def from_json(cls, path) -> "Certificate":
        with open(str(path)) as fh:
            doc = json.load(fh)
        return cls(
            solver=str(doc["solver"]),
            K=int(doc["K"]),
            N=int(doc["N"]),
            eta=float(doc["eta"]),
            beta=float(doc["beta"]),
            beta_per_region=np.asarray(doc["beta_per_region"], dtype=float),
            b=np.asarray(doc["b"], dtype=float),
            safety_lower_bound=float(doc["safety_lower_bound"]),
            diagnostics=dict(doc.get("diagnostics", {})),
        )


@dataclass
class DualSolution:
    """Inner worst-case multipliers, one row of length 2(K+1)+2 per region.

    Layout per region: [mu_plus (K+1), mu_minus (K+1), s_plus, s_minus] for
    the box rows and the two sum rows of the ambiguity polytope.
    """

    lambdas: np.ndarray
    objective: float


def _pick_backend(backend: str, n_rows: int, n_cols: int) -> str:
    if backend != "auto":
        return backend
    # dense tableau cost grows with rows * (rows + cols); stay dense only while cheap
    return "dense" if n_rows * (n_rows + n_cols) <= 3e5 else "highs"


def _finish_certificate(solver, bounds, init_pos, N, b, beta_lp, diagnostics):
    """Recompute eta and per-region slacks from the oracle at the final b."""
    b = np.clip(np.asarray(b, dtype=float), 0.0, 1.0)
    gaps, _ = batch_gaps(bounds, b)
    eta = float(b[init_pos].max())
    beta = max(float(beta_lp), float(gaps.max(initial=0.0)))
    return Certificate(
        solver=solver,
        K=bounds.K,
        N=int(N),
        eta=eta,
        beta=beta,
        beta_per_region=gaps,
        b=b,
        safety_lower_bound=safety_bound(eta, beta, int(N)),
        diagnostics=diagnostics,
    )


# ----- exact dual LP ---------------------------------------------------------


def synth_dual(
    bounds: TransitionBounds,
    partition,
    horizon: int,
    lp_backend: str = "auto",
):
    """Synthesize the optimal barrier by dualizing every inner maximization.

    Strong duality turns max_{p in A_i} (b,1).p <= b_i + beta_i into the
    existence of multipliers lambda_i >= 0 with H_i'lambda_i = (b,1) and
    h_i'lambda_i <= b_i + beta_i, which makes the whole problem one LP over
    (b, eta, beta, beta_i, lambda_1..lambda_K).  Returns the Certificate and
    a DualSolution with inner-optimal multipliers at the final barrier.
    """
    K = bounds.K
    N = int(horizon)
    init_pos = _init_positions(partition, K)
    t0 = time.perf_counter()

    lam_len = 2 * (K + 1) + 2
    n_var = 2 * K + 2 + K * lam_len
    L0 = 2 * K + 2  # first multiplier column

    def lam_col(i, part, j=0):
        # part: 0 -> mu_plus[j], 1 -> mu_minus[j], 2 -> s_plus, 3 -> s_minus
        base = L0 + i * lam_len
        if part == 0:
            return base + j
        if part == 1:
            return base + (K + 1) + j
        return base + 2 * (K + 1) + (part - 2)

    rows_G, cols_G, vals_G, rhs_G = [], [], [], []
    r = 0
    for i in range(K):
        lo, up = bounds.row_dense(i)
        # h_i' lambda_i - b_i - beta_i <= 0
        for j in range(K + 1):
            if up[j] != 0.0:
                rows_G.append(r); cols_G.append(lam_col(i, 0, j)); vals_G.append(float(up[j]))
            if lo[j] != 0.0:
                rows_G.append(r); cols_G.append(lam_col(i, 1, j)); vals_G.append(-float(lo[j]))
        rows_G.append(r); cols_G.append(lam_col(i, 2)); vals_G.append(1.0)
        rows_G.append(r); cols_G.append(lam_col(i, 3)); vals_G.append(-1.0)
        rows_G.append(r); cols_G.append(i); vals_G.append(-1.0)
        rows_G.append(r); cols_G.append(K + 2 + i); vals_G.append(-1.0)
        rhs_G.append(0.0)
        r += 1
    for i in init_pos:
        rows_G.extend([r, r]); cols_G.extend([int(i), K]); vals_G.extend([1.0, -1.0])
        rhs_G.append(0.0)
        r += 1
    for i in range(K):
        rows_G.extend([r, r]); cols_G.extend([K + 2 + i, K + 1]); vals_G.extend([1.0, -1.0])
        rhs_G.append(0.0)
        r += 1

    rows_E, cols_E, vals_E, rhs_E = [], [], [], []
    q = 0
    for i in range(K):
        for j in range(K + 1):
            rows_E.extend([q, q, q, q])
            cols_E.extend(
                [lam_col(i, 0, j), lam_col(i, 1, j), lam_col(i, 2), lam_col(i, 3)]
            )
            vals_E.extend([1.0, -1.0, 1.0, -1.0])
            if j < K:
                rows_E.append(q); cols_E.append(j); vals_E.append(-1.0)
                rhs_E.append(0.0)
            else:
                rhs_E.append(1.0)
            q += 1

    G = sp.csr_matrix((vals_G, (rows_G, cols_G)), shape=(r, n_var))
    E = sp.csr_matrix((vals_E, (rows_E, cols_E)), shape=(q, n_var))
    c = np.zeros(n_var)
    c[K] = 1.0
    c[K + 1] = float(N)
    lb = np.zeros(n_var)
    ub = np.full(n_var, np.inf)
    ub[: 2 * K + 2] = 1.0

    lp = LinearProgram(c, G, np.asarray(rhs_G), E, np.asarray(rhs_E), lb, ub)
    backend = _pick_backend(lp_backend, r + q, n_var)
    sol = solve_lp(lp, backend=backend)
    if sol.status != "optimal":
        raise LPFailure(f"dual synthesis LP is {sol.status}")

    x = sol.x
    b = np.clip(x[:K], 0.0, 1.0)
    cert = _finish_certificate(
        "dual",
        bounds,
        init_pos,
        N,
        b,
        x[K + 1],
        {
            "objective": float(sol.objective),
            "lp_backend": sol.backend,
            "lp_iterations": sol.iterations,
            "runtime_s": time.perf_counter() - t0,
        },
    )
    # inner-optimal multipliers at the final b, via the threshold rule:
    # destinations worth more than t sit at the upper bound (weight on the
    # upper box row), the rest at the lower bound, t on the sum rows
    bbar = np.append(cert.b, 1.0)
    _, batch = batch_worst_case(bounds, bbar)
    t = batch.thresholds
    mu_plus = np.maximum(bbar[None, :] - t[:, None], 0.0)
    mu_minus = np.maximum(t[:, None] - bbar[None, :], 0.0)
    lambdas = np.hstack(
        [mu_plus, mu_minus, np.maximum(t, 0.0)[:, None], np.maximum(-t, 0.0)[:, None]]
    )
    return cert, DualSolution(lambdas=lambdas, objective=float(sol.objective))


# ----- counterexample-guided synthesis ---------------------------------------


# Slack allowed when the counterexample pool saturates: once every region's
# worst-case vertex is already pooled, any leftover gap excess is LP-solver
# feasibility tolerance, not a missing constraint.
_POOL_SLACK = 1e-6


def _pool_block(P, regions: np.ndarray, row_offset: int, K: int):
    """Coo pieces for rows p[:K].b - b_i - beta_i <= -p_u of pooled vertices."""
    coo = P.tocoo()
    m = P.shape[0]
    safe = coo.col < K
    rhs = np.zeros(m)
    rhs[coo.row[~safe]] = -coo.data[~safe]
    r = np.arange(m)
    rows = np.concatenate([coo.row[safe], r, r]) + row_offset
    cols = np.concatenate([coo.col[safe], regions, K + 2 + regions])
    vals = np.concatenate([coo.data[safe], -np.ones(m), -np.ones(m)])
    return rows, cols, vals, rhs


def synth_cegs(
    bounds: TransitionBounds,
    partition,
    horizon: int,
    tol: float = 1e-9,
    max_outer: int = 100,
    lp_backend: str = "auto",
) -> Certificate:
    """Counterexample-guided synthesis.

    Keeps a pool of worst-case distributions per region, solves the barrier
    LP restricted to the pool, then extracts each region's worst-case vertex
    at the candidate barrier and adds the previously unseen ones.  Terminates
    once the pooled optimum already covers the true worst case within ``tol``.
    """
    K = bounds.K
    N = int(horizon)
    init_pos = _init_positions(partition, K)
    t0 = time.perf_counter()
    n_var = 2 * K + 2

    seen = [set() for _ in range(K)]
    blocks = []  # (rows, cols, vals) coo pieces of pooled martingale rows
    rhs_parts = []
    pool_rows = 0

    def add_pool(P, regions) -> int:
        """Pool the unseen rows of csr matrix P; returns how many were fresh."""
        nonlocal pool_rows
        P = P.tocsr()
        P.eliminate_zeros()
        fresh = []
        for t, i in enumerate(regions):
            sl = slice(P.indptr[t], P.indptr[t + 1])
            key = hash((P.indices[sl].tobytes(), np.round(P.data[sl], 12).tobytes()))
            if key not in seen[i]:
                seen[i].add(key)
                fresh.append(t)
        if not fresh:
            return 0
        if len(fresh) < P.shape[0]:
            P = P[fresh]
        piece = _pool_block(P, np.asarray(regions)[fresh], pool_rows, K)
        blocks.append(piece[:3])
        rhs_parts.append(piece[3])
        pool_rows += P.shape[0]
        return P.shape[0]

    add_pool(
        sp.csr_matrix(
            np.vstack([sample_feasible(AmbiguitySet.from_row(bounds, i)) for i in range(K)])
        ),
        np.arange(K),
    )

    # static rows: b_i - eta <= 0 on initial regions, beta_i - beta <= 0
    n_init = init_pos.shape[0]
    stat_rows = np.concatenate(
        [np.arange(n_init)] * 2 + [n_init + np.arange(K)] * 2
    )
    stat_cols = np.concatenate(
        [init_pos, np.full(n_init, K), K + 2 + np.arange(K), np.full(K, K + 1)]
    )
    stat_vals = np.concatenate(
        [np.ones(n_init), -np.ones(n_init), np.ones(K), -np.ones(K)]
    )
    c = np.zeros(n_var)
    c[K] = 1.0
    c[K + 1] = float(N)

    outer = 0
    while True:
        outer += 1
        if outer > max_outer:
            raise IterationCapExceeded(
                f"counterexample loop did not converge in {max_outer} iterations"
            )
        rows = np.concatenate([blk[0] for blk in blocks] + [stat_rows + pool_rows])
        cols = np.concatenate([blk[1] for blk in blocks] + [stat_cols])
        vals = np.concatenate([blk[2] for blk in blocks] + [stat_vals])
        G = sp.csr_matrix((vals, (rows, cols)), shape=(pool_rows + n_init + K, n_var))
        g = np.concatenate(rhs_parts + [np.zeros(n_init + K)])
        lp = LinearProgram(c, G, g, None, None, np.zeros(n_var), np.ones(n_var))
        backend = _pick_backend(lp_backend, lp.G.shape[0], lp.n)
        sol = solve_lp(lp, backend=backend)
        if sol.status != "optimal":
            raise LPFailure(f"outer synthesis LP is {sol.status}")
        b = np.clip(sol.x[:K], 0.0, 1.0)
        beta_lp = float(sol.x[K + 1])

        gaps, batch = batch_gaps(bounds, b)
        excess = float(gaps.max(initial=0.0)) - beta_lp
        reason = None
        if excess <= tol:
            reason = "converged"
        elif add_pool(batch.to_csr_matrix(), np.arange(K)) == 0:
            if excess <= _POOL_SLACK:
                reason = "pool-saturated"
            else:
                raise IterationCapExceeded(
                    f"pool saturated with worst-case excess {excess:.3e}"
                )
        if reason is not None:
            return _finish_certificate(
                "cegs",
                bounds,
                init_pos,
                N,
                b,
                beta_lp,
                {
                    "objective": float(sol.objective),
                    "outer_iterations": outer,
                    "pool_size": pool_rows,
                    "lp_backend": sol.backend,
                    "terminated": reason,
                    "runtime_s": time.perf_counter() - t0,
                },
            )


# ----- projected subgradient descent ------------------------------------------


@dataclass
class GDConfig:
    """Tuning knobs for subgradient descent; defaults match the shipped solver."""

    norm_order: float = 16.0
    step0: Optional[float] = None  # resolved to 0.1 / horizon
    decay: float = 0.999
    max_iters: int = 20000
    stall_window: int = 50
    stall_tol: float = 1e-6

    def __post_init__(self):
        if not self.norm_order > 1:
            raise SynthesisError("norm_order must exceed 1")
        if not 0.0 < self.decay < 1.0:
            raise SynthesisError("decay must lie in (0, 1)")
        if self.step0 is not None and not self.step0 > 0:
            raise SynthesisError("step0 must be positive")


def init_barrier(bounds: TransitionBounds) -> np.ndarray:
    """Starting barrier: each region's worst-case one-step exit probability."""
    return np.clip(bounds.u_upper.astype(float).copy(), 0.0, 1.0)


def loss(b, bounds: TransitionBounds, partition, horizon: int) -> tuple:
    """Exact objective at barrier b; returns (L, eta, beta)."""
    K = bounds.K
    init_pos = _init_positions(partition, K)
    b = np.asarray(b, dtype=float)
    if b.shape != (K,):
        raise DimensionMismatch(f"barrier must have length {K}")
    gaps, _ = batch_gaps(bounds, b)
    eta = float(b[init_pos].max())
    beta = float(gaps.max(initial=0.0))
    return eta + horizon * beta, eta, beta


def _pnorm(v: np.ndarray, p: float) -> float:
    """Scaled p-norm, safe against overflow for large p."""
    m = float(np.max(v, initial=0.0))
    if m <= 0.0:
        return 0.0
    return m * float(np.sum((v / m) ** p)) ** (1.0 / p)


def _smoothed_state(bounds, init_pos, N, b, p):
    gaps, batch = batch_gaps(bounds, b)
    eta_vec = b[init_pos]
    n_eta = _pnorm(eta_vec, p)
    n_beta = _pnorm(gaps, p)
    smoothed = n_eta + N * n_beta

    grad = np.zeros(bounds.K)
    if n_eta > 0.0:
        np.add.at(grad, init_pos, (eta_vec / n_eta) ** (p - 1))
    if n_beta > 0.0:
        w = (gaps / n_beta) ** (p - 1)
        grad += N * batch.gradient_scatter(w)
    return smoothed, grad, gaps


def smoothed_loss_and_grad(
    b, bounds: TransitionBounds, partition, horizon: int,
    config: Optional[GDConfig] = None,
) -> tuple:
    """Smoothed objective ||b_I||_p + N*||gaps||_p and its subgradient at b."""
    cfg = config or GDConfig()
    K = bounds.K
    init_pos = _init_positions(partition, K)
    b = np.asarray(b, dtype=float)
    if b.shape != (K,):
        raise DimensionMismatch(f"barrier must have length {K}")
    smoothed, grad, _ = _smoothed_state(bounds, init_pos, int(horizon), b, cfg.norm_order)
    return smoothed, grad


def synth_gd(
    bounds: TransitionBounds,
    partition,
    horizon: int,
    config: Optional[GDConfig] = None,
    callback=None,
) -> Certificate:
    """Projected subgradient descent on the smoothed objective.

    Tracks the best barrier under the exact loss, steps along the smoothed
    subgradient with a geometrically decaying step size, projects onto
    [0,1]^K and stops when the worst-case slack stops moving over a window
    or the iteration cap is reached.  Always returns a valid certificate.
    """
    cfg = config or GDConfig()
    K = bounds.K
    N = int(horizon)
    init_pos = _init_positions(partition, K)
    step0 = cfg.step0 if cfg.step0 is not None else 0.1 / max(N, 1)
    t0 = time.perf_counter()

    b = init_barrier(bounds)
    best_L = np.inf
    best_b = b.copy()
    best_iter = 0
    recent = []
    stalled = False
    step = step0
    iters = 0

    for k in range(cfg.max_iters):
        iters = k + 1
        smoothed, grad, gaps = _smoothed_state(bounds, init_pos, N, b, cfg.norm_order)
        worst_gap = float(gaps.max(initial=0.0))
        exact = float(b[init_pos].max()) + N * worst_gap
        if exact < best_L:
            best_L = exact
            best_b = b.copy()
            best_iter = k
        if callback is not None:
            callback(k, b, exact, smoothed)
        recent.append(worst_gap)
        if len(recent) > cfg.stall_window:
            recent.pop(0)
            if max(recent) - min(recent) < cfg.stall_tol:
                stalled = True
                break
        b = np.clip(b - step * grad, 0.0, 1.0)
        step *= cfg.decay

    return _finish_certificate(
        "gd",
        bounds,
        init_pos,
        N,
        best_b,
        0.0,
        {
            "objective": float(best_L),
            "iterations": iters,
            "best_iteration": best_iter,
            "stalled": stalled,
            "init": "unsafe-upper",
            "norm_order": cfg.norm_order,
            "step0": float(step0),
            "decay": cfg.decay,
            "runtime_s": time.perf_counter() - t0,
        },
    )
