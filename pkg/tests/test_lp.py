"""Two-phase simplex solver and the HiGHS delegate."""

import numpy as np
import pytest

from pwcbarrier.lp import (
    LinearProgram,
    LPError,
    check_feasible,
    dump_lp,
    solve_lp,
)


def random_feasible_lp(rng, n_vars=6, n_ineq=8, n_samples=5):
    """LP whose feasible set provably contains ``n_samples`` sampled points."""
    lb = rng.uniform(-2.0, 0.0, size=n_vars)
    ub = lb + rng.uniform(0.5, 3.0, size=n_vars)
    pts = rng.uniform(lb, ub, size=(n_samples, n_vars))
    G = rng.normal(size=(n_ineq, n_vars))
    g = (G @ pts.T).max(axis=1) + rng.uniform(0.01, 0.5, size=n_ineq)
    c = rng.normal(size=n_vars)
    return LinearProgram(c=c, G=G, g=g, lb=lb, ub=ub), pts


def test_minimize_over_nonnegative_halfline():
    sol = solve_lp(LinearProgram(c=[1.0], lb=[0.0]))
    assert sol.status == "optimal"
    assert sol.x[0] == pytest.approx(0.0, abs=1e-12)
    assert sol.objective == pytest.approx(0.0, abs=1e-12)


def test_maximize_over_unit_interval():
    sol = solve_lp(LinearProgram(c=[-1.0], lb=[0.0], ub=[1.0]))
    assert sol.status == "optimal"
    assert sol.x[0] == pytest.approx(1.0, abs=1e-12)
    assert sol.objective == pytest.approx(-1.0, abs=1e-12)


def test_two_region_barrier_program_reaches_half():
    # variables (b0, b1, eta, beta); singleton transition rows make the
    # martingale constraints b1 - b0 <= beta and 0.05 - 0.05 b1 <= beta
    c = np.array([0.0, 0.0, 1.0, 10.0])
    G = np.array(
        [
            [1.0, 0.0, -1.0, 0.0],
            [0.0, 1.0, -1.0, 0.0],
            [-1.0, 1.0, 0.0, -1.0],
            [0.0, -0.05, 0.0, -1.0],
        ]
    )
    g = np.array([0.0, 0.0, 0.0, -0.05])
    lp = LinearProgram(
        c=c, G=G, g=g, lb=[0.0, 0.0, 0.0, 0.0], ub=[1.0, 1.0, 1.0, np.inf]
    )
    for backend in ("dense", "highs"):
        sol = solve_lp(lp, backend=backend)
        assert sol.status == "optimal"
        assert sol.objective == pytest.approx(0.5, abs=1e-9)


def test_equality_constraints_are_handled_natively():
    lp = LinearProgram(
        c=[1.0, 1.0], E=[[1.0, 1.0]], e=[1.0], lb=[0.0, 0.0]
    )
    sol = solve_lp(lp)
    assert sol.status == "optimal"
    assert sol.objective == pytest.approx(1.0, abs=1e-10)
    assert sol.x.sum() == pytest.approx(1.0, abs=1e-10)


def test_infeasible_program_is_reported():
    lp = LinearProgram(c=[1.0], G=[[1.0], [-1.0]], g=[0.0, -1.0])
    sol = solve_lp(lp)
    assert sol.status == "infeasible"
    assert sol.x is None


def test_unbounded_program_is_reported():
    sol = solve_lp(LinearProgram(c=[-1.0], lb=[0.0]))
    assert sol.status == "unbounded"


def test_unknown_backend_is_rejected():
    with pytest.raises(LPError):
        solve_lp(LinearProgram(c=[1.0], lb=[0.0]), backend="mystery")


def test_solutions_are_certified_feasible(rng):
    for _ in range(25):
        lp, _ = random_feasible_lp(rng)
        sol = solve_lp(lp)
        assert sol.status == "optimal"
        ok, report = check_feasible(lp, sol.x)
        assert ok, report


def test_weak_duality_against_sampled_feasible_points(rng):
    for _ in range(25):
        lp, pts = random_feasible_lp(rng)
        sol = solve_lp(lp)
        assert sol.status == "optimal"
        for x in pts:
            assert lp.c @ x >= sol.objective - 1e-7


def test_dense_and_highs_backends_agree(rng):
    for _ in range(15):
        lp, _ = random_feasible_lp(rng, n_vars=5, n_ineq=10)
        a = solve_lp(lp, backend="dense")
        b = solve_lp(lp, backend="highs")
        assert a.status == b.status == "optimal"
        assert a.objective == pytest.approx(b.objective, abs=1e-7)


def test_repeated_solves_are_deterministic(rng):
    lp, _ = random_feasible_lp(rng)
    first = solve_lp(lp)
    second = solve_lp(lp)
    assert first.status == second.status
    assert first.iterations == second.iterations
    assert np.array_equal(first.x, second.x)
    assert first.objective == second.objective


def test_duplicated_degenerate_rows_do_not_break_the_solver(rng):
    # near-duplicate rows with zero slack produce degenerate pivots
    lp, _ = random_feasible_lp(rng, n_vars=4, n_ineq=6)
    x0 = solve_lp(lp).x
    G = np.vstack([lp.G, lp.G + 1e-13, lp.G])
    g = np.concatenate([lp.G @ x0, lp.G @ x0, lp.G @ x0])
    tight = LinearProgram(c=lp.c, G=G, g=g, lb=lp.lb, ub=lp.ub)
    sol = solve_lp(tight)
    assert sol.status == "optimal"
    ok, report = check_feasible(tight, sol.x, tol=1e-7)
    assert ok, report


def test_solution_reports_tolerances_and_metadata():
    sol = solve_lp(LinearProgram(c=[1.0], G=[[1.0]], g=[2.0], lb=[0.0]))
    assert sol.status == "optimal"
    assert sol.pivot_tol == 1e-10
    assert sol.feas_tol == 1e-8
    assert sol.backend == "dense"
    assert "refactorizations" in sol.meta


def test_check_feasible_flags_violations():
    lp = LinearProgram(c=[1.0, 1.0], G=[[1.0, 1.0]], g=[1.0], lb=[0.0, 0.0])
    ok, report = check_feasible(lp, np.array([0.5, 0.5]))
    assert ok
    ok, report = check_feasible(lp, np.array([0.5, 0.5005]))
    assert not ok
    assert report["inequalities"] == pytest.approx(0.0005 / 2.0, abs=1e-12)
    ok, report = check_feasible(lp, np.array([-0.01, 0.0]))
    assert not ok
    assert report["bounds"] == pytest.approx(0.01, abs=1e-12)


def test_check_feasible_accepts_random_interior_points(rng):
    for _ in range(20):
        lb = rng.uniform(-1.0, 0.0, size=3)
        ub = lb + rng.uniform(0.5, 2.0, size=3)
        lp = LinearProgram(c=np.ones(3), lb=lb, ub=ub)
        x = rng.uniform(lb, ub)
        ok, _ = check_feasible(lp, x)
        assert ok


def test_dump_lp_layout():
    lp = LinearProgram(
        c=[1.0, -2.0], G=[[1.0, 1.0]], g=[3.0], E=[[1.0, 0.0]], e=[0.5],
        lb=[0.0, 0.0], ub=[1.0, np.inf],
    )
    text = dump_lp(lp)
    lines = text.strip().split("\n")
    assert lines[0].startswith("min ")
    assert lines[1].startswith("ineq ") and lines[1].endswith("<= 3")
    assert lines[2].startswith("eq ") and lines[2].endswith("== 0.5")
    assert lines[3].startswith("bound x0 ")
    assert lines[4].startswith("bound x1 ")


def test_dimension_and_bound_validation():
    with pytest.raises(Exception):
        LinearProgram(c=[1.0, 2.0], G=[[1.0]], g=[0.0])
    with pytest.raises(LPError):
        LinearProgram(c=[1.0], lb=[1.0], ub=[0.0])
