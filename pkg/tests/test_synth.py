"""Barrier synthesis: dual LP, counterexample-guided, and subgradient solvers."""

import numpy as np
import pytest

from pwcbarrier.ambiguity import AmbiguitySet, to_hpolytope
from pwcbarrier.bounds import TransitionBounds
from pwcbarrier.synth import (
    Certificate,
    GDConfig,
    SynthesisError,
    init_barrier,
    loss,
    safety_bound,
    smoothed_loss_and_grad,
    synth_cegs,
    synth_dual,
    synth_gd,
)
from pwcbarrier.validate import check_certificate
from tests.conftest import (
    adversarial_bounds,
    certifiable_instance,
    convexity_violation,
    fd_gradient_errors,
    two_region_instance,
)


def absorbing_instance():
    bounds = TransitionBounds.from_dense([[1.0]], [[1.0]], [0.0], [0.0])
    return bounds, [0], 10


# ----- safety_bound -----------------------------------------------------------


def test_safety_bound_arithmetic():
    assert safety_bound(0.0, 0.0, 10) == 1.0
    assert safety_bound(0.05, 0.005, 10) == pytest.approx(0.90, abs=1e-15)
    assert safety_bound(0.9, 0.5, 10) == 0.0


# ----- hand-checkable instances ------------------------------------------------


def test_absorbing_region_gets_a_perfect_certificate():
    bounds, init, N = absorbing_instance()
    cert, dual = synth_dual(bounds, init, N)
    assert cert.eta == pytest.approx(0.0, abs=1e-12)
    assert cert.beta == pytest.approx(0.0, abs=1e-12)
    assert cert.safety_lower_bound == pytest.approx(1.0, abs=1e-12)

    cegs = synth_cegs(bounds, init, N)
    assert cegs.safety_lower_bound == pytest.approx(1.0, abs=1e-12)
    assert cegs.diagnostics["outer_iterations"] == 1
    assert cegs.diagnostics["terminated"] == "converged"

    gd = synth_gd(bounds, init, N)
    assert gd.objective <= 1e-6
    assert gd.safety_lower_bound >= 1.0 - 1e-6


def test_two_region_instance_reaches_exactly_half(two_region):
    bounds, partition, N = two_region
    cert, _ = synth_dual(bounds, partition, N)
    assert cert.objective == pytest.approx(0.5, abs=1e-9)
    assert cert.safety_lower_bound == pytest.approx(0.5, abs=1e-9)
    assert np.allclose(cert.b, [0.0, 0.0], atol=1e-9)
    assert cert.beta == pytest.approx(0.05, abs=1e-9)

    cegs = synth_cegs(bounds, partition, N)
    assert cegs.objective == pytest.approx(0.5, abs=1e-9)
    # singleton rows admit one vertex each: the initial pool is already
    # worst-case, so the loop settles immediately
    assert cegs.diagnostics["outer_iterations"] == 1


def test_two_region_single_initial_variant_reaches_ten_twentyfirsts(two_region):
    # tagging only the first region initial shifts the optimum to
    # min_b b0 + 10*max(b1 - b0, 0.05 - 0.05*b1) = 10/21 at b = (0, 1/21)
    bounds, _, N = two_region
    cert, _ = synth_dual(bounds, [0], N)
    assert cert.objective == pytest.approx(10.0 / 21.0, abs=1e-9)
    assert np.allclose(cert.b, [0.0, 1.0 / 21.0], atol=1e-9)
    cegs = synth_cegs(bounds, [0], N)
    assert cegs.objective == pytest.approx(10.0 / 21.0, abs=1e-9)


def test_two_region_subgradient_descent_gets_close(two_region):
    bounds, partition, N = two_region
    cert = synth_gd(bounds, partition, N, GDConfig(max_iters=5000))
    assert cert.objective <= 0.51


# ----- cross-solver agreement ---------------------------------------------------


def test_dual_and_cegs_agree_on_adversarial_instances(rng):
    for _ in range(10):
        K = int(rng.integers(2, 9))
        bounds = adversarial_bounds(rng, K)
        init = np.sort(rng.choice(K, size=int(rng.integers(1, K + 1)), replace=False))
        N = int(rng.integers(3, 12))
        cert_d, _ = synth_dual(bounds, init, N)
        cert_c = synth_cegs(bounds, init, N)
        assert cert_d.objective == pytest.approx(cert_c.objective, abs=1e-6)


def test_dual_and_cegs_agree_on_certifiable_instances(rng):
    for _ in range(10):
        bounds, init, N = certifiable_instance(rng)
        cert_d, _ = synth_dual(bounds, init, N)
        cert_c = synth_cegs(bounds, init, N)
        assert cert_d.objective == pytest.approx(cert_c.objective, abs=1e-6)
        for cert in (cert_d, cert_c):
            assert check_certificate(cert, bounds, init).passed


def test_dual_multipliers_witness_the_inner_maximization(rng):
    bounds, init, N = certifiable_instance(rng)
    cert, dual = synth_dual(bounds, init, N)
    K = bounds.K
    assert dual.lambdas.shape == (K, 2 * (K + 1) + 2)
    assert np.all(dual.lambdas >= -1e-12)
    bbar = np.append(cert.b, 1.0)
    for i in range(K):
        poly = to_hpolytope(AmbiguitySet.from_row(bounds, i))
        lam = dual.lambdas[i]
        assert np.allclose(poly.H.T @ lam, bbar, atol=1e-7)
        assert poly.h @ lam <= cert.b[i] + cert.beta_per_region[i] + 1e-7


# ----- loss and its smoothing ---------------------------------------------------


def test_loss_worked_examples(two_region):
    bounds, partition, N = two_region
    L, eta, beta = loss([0.0, 0.0], bounds, partition, N)
    assert (L, eta, beta) == pytest.approx((0.5, 0.0, 0.05), abs=1e-15)

    L_ones, eta_ones, _ = loss([1.0, 1.0], bounds, partition, N)
    assert eta_ones == 1.0
    assert L_ones >= 1.0

    a_bounds, a_init, a_N = absorbing_instance()
    L0, _, _ = loss([0.0], a_bounds, a_init, a_N)
    assert L0 == 0.0


def test_smoothed_loss_dominates_exact_loss(rng):
    bounds, init, N = certifiable_instance(rng)
    for _ in range(50):
        b = rng.uniform(0.0, 1.0, size=bounds.K)
        L, _, _ = loss(b, bounds, init, N)
        smoothed, _ = smoothed_loss_and_grad(b, bounds, init, N)
        assert smoothed >= L - 1e-12


def test_smoothed_loss_respects_the_norm_equivalence_ceiling(rng):
    bounds, init, N = certifiable_instance(rng)
    p = GDConfig().norm_order
    m = len(init)
    K = bounds.K
    for _ in range(50):
        b = rng.uniform(0.0, 1.0, size=K)
        L, eta, beta = loss(b, bounds, init, N)
        smoothed, _ = smoothed_loss_and_grad(b, bounds, init, N)
        ceiling = eta * m ** (1.0 / p) + N * beta * K ** (1.0 / p)
        assert smoothed <= ceiling + 1e-9


def test_exact_loss_is_convex(rng):
    bounds, init, N = certifiable_instance(rng)

    def value(b):
        return loss(b, bounds, init, N)[0]

    assert convexity_violation(value, rng, bounds.K, 1000) <= 1e-9


def test_smoothed_loss_is_convex(rng):
    bounds, init, N = certifiable_instance(rng)

    def value(b):
        return smoothed_loss_and_grad(b, bounds, init, N)[0]

    assert convexity_violation(value, rng, bounds.K, 1000) <= 1e-9


def test_gradient_matches_central_differences(rng):
    bounds = adversarial_bounds(rng, 8)
    init = [0, 2, 5]
    worst, checked = fd_gradient_errors(bounds, init, 7, rng, n_points=100)
    assert checked == 100
    assert worst <= 1e-4


# ----- subgradient descent mechanics --------------------------------------------


def test_gd_best_objective_is_monotone(rng):
    bounds, init, N = certifiable_instance(rng)
    best_seen = []

    def track(k, b, exact, smoothed):
        best = exact if not best_seen else min(best_seen[-1], exact)
        best_seen.append(best)

    synth_gd(bounds, init, N, GDConfig(max_iters=500), callback=track)
    assert len(best_seen) > 0
    assert all(b2 <= b1 + 1e-15 for b1, b2 in zip(best_seen, best_seen[1:]))


def test_gd_certificate_reports_its_best_iterate(rng):
    bounds, init, N = certifiable_instance(rng)
    exact_values = []

    def track(k, b, exact, smoothed):
        exact_values.append(exact)

    cert = synth_gd(bounds, init, N, GDConfig(max_iters=300), callback=track)
    assert cert.objective == pytest.approx(min(exact_values), abs=1e-12)
    assert check_certificate(cert, bounds, init).passed


def test_gd_stalls_on_flat_instances():
    bounds, init, N = absorbing_instance()
    cert = synth_gd(bounds, init, N)
    assert cert.diagnostics["stalled"]
    assert cert.diagnostics["iterations"] < GDConfig().max_iters


def test_init_barrier_reads_the_unsafe_upper_column(two_region):
    bounds, _, _ = two_region
    assert np.array_equal(init_barrier(bounds), [0.0, 0.05])
    a_bounds, _, _ = absorbing_instance()
    assert np.array_equal(init_barrier(a_bounds), [0.0])


def test_gdconfig_validation():
    with pytest.raises(SynthesisError):
        GDConfig(norm_order=1.0)
    with pytest.raises(SynthesisError):
        GDConfig(decay=1.0)
    with pytest.raises(SynthesisError):
        GDConfig(step0=0.0)


# ----- certificates --------------------------------------------------------------


def test_certificate_json_round_trip(tmp_path, two_region):
    bounds, partition, N = two_region
    cert = synth_cegs(bounds, partition, N)
    path = tmp_path / "certificate.json"
    cert.to_json(path)
    back = Certificate.from_json(path)
    assert back.solver == cert.solver
    assert back.K == cert.K and back.N == cert.N
    assert back.eta == cert.eta and back.beta == cert.beta
    assert np.array_equal(back.b, cert.b)
    assert np.array_equal(back.beta_per_region, cert.beta_per_region)
    assert back.safety_lower_bound == cert.safety_lower_bound


def test_certificate_csv_export(tmp_path, two_region):
    bounds, partition, N = two_region
    cert = synth_cegs(bounds, partition, N)
    path = tmp_path / "barrier.csv"
    cert.to_csv(path)
    lines = path.read_text().strip().split("\n")
    assert lines[0] == "region_index,b"
    assert len(lines) == cert.K + 1
    for i, line in enumerate(lines[1:]):
        idx, value = line.split(",")
        assert int(idx) == i
        assert float(value) == cert.b[i]


def test_certificate_rejects_mismatched_arrays():
    with pytest.raises(Exception):
        Certificate(
            solver="dual", K=3, N=5, eta=0.0, beta=0.0,
            beta_per_region=np.zeros(2), b=np.zeros(3),
            safety_lower_bound=1.0,
        )


def test_no_initial_regions_is_an_error(two_region):
    bounds, _, N = two_region
    with pytest.raises(SynthesisError):
        synth_dual(bounds, [], N)
