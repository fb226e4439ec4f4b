"""Transition-probability intervals: Gaussian kernels, models, and files."""

import math

import numpy as np
import pytest

from pwcbarrier.bounds import (
    Affine,
    ClosedForm,
    InfeasibleRow,
    IntervalMap,
    InvariantViolation,
    MissingImage,
    ParseError,
    TransitionBounds,
    affine_bounds,
    export_bounds,
    gaussian_box_prob,
    import_bounds,
    interval_map_bounds,
    transition_row,
)
from pwcbarrier.geometry import Box, DimensionMismatch, make_grid


def phi(z: float) -> float:
    """Standard normal CDF via erf, independent of the library's ndtr path."""
    return 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))


def interval_prob(m_lo, m_hi, cell_lo, cell_hi, sigma):
    """Hand evaluation of the per-dimension factor rule for a 1D target."""

    def g(m):
        return phi((cell_hi - m) / sigma) - phi((cell_lo - m) / sigma)

    mid = min(max(0.5 * (cell_lo + cell_hi), m_lo), m_hi)
    return min(g(m_lo), g(m_hi)), g(mid)


# ----- gaussian_box_prob -----------------------------------------------------


def test_full_support_probability_is_one():
    assert gaussian_box_prob([0.0], [1.0], [-1e6], [1e6]) == pytest.approx(1.0, abs=1e-12)


def test_half_line_probability_is_half():
    assert gaussian_box_prob([0.0], [1.0], [0.0], [1e6]) == pytest.approx(0.5, abs=1e-12)


def test_shifted_interval_matches_erf_oracle():
    expected = phi(0.5) - phi(-0.5)
    got = gaussian_box_prob([0.05], [0.1], [0.0], [0.1])
    assert got == pytest.approx(expected, abs=1e-12)
    assert got == pytest.approx(0.382925, abs=1e-6)


def test_multidimensional_probability_factorizes():
    got = gaussian_box_prob([0.0, 1.0], [1.0, 2.0], [-1.0, 0.0], [1.0, 2.0])
    expected = (phi(1.0) - phi(-1.0)) * (phi(0.5) - phi(-0.5))
    assert got == pytest.approx(expected, abs=1e-12)


def test_box_argument_and_batched_means():
    box = Box([-1.0], [1.0])
    means = np.array([[0.0], [0.5], [-2.0]])
    got = gaussian_box_prob(means, [1.0], box)
    assert got.shape == (3,)
    for m, v in zip(means[:, 0], got):
        assert v == pytest.approx(phi(1.0 - m) - phi(-1.0 - m), abs=1e-12)


def test_nonpositive_sigma_is_rejected():
    with pytest.raises(InvariantViolation):
        gaussian_box_prob([0.0], [0.0], [-1.0], [1.0])


# ----- transition_row / affine_bounds ----------------------------------------


def test_transition_row_matches_factor_rule_by_hand():
    # mean image [0, 0.1] (an affine 0.5x map applied to the source [0, 0.2])
    part = make_grid(Box([0.0], [1.0]), (10,), Box([0.0], [0.1]))
    idx, lower, upper, u_lo, u_up = transition_row(Box([0.0], [0.1]), part, 0.1)
    dense_lo = np.zeros(part.K)
    dense_up = np.zeros(part.K)
    dense_lo[idx] = lower
    dense_up[idx] = upper
    # target cell 0 is [0, 0.1]: the mean interval straddles its midpoint
    assert dense_up[0] == pytest.approx(phi(0.5) - phi(-0.5), abs=1e-12)
    assert dense_lo[0] == pytest.approx(phi(1.0) - phi(0.0), abs=1e-12)
    for j in range(part.K):
        lo_ref, up_ref = interval_prob(0.0, 0.1, 0.1 * j, 0.1 * (j + 1), 0.1)
        if up_ref >= 1e-12:
            assert dense_up[j] == pytest.approx(up_ref, abs=1e-12)
            assert dense_lo[j] == pytest.approx(lo_ref, abs=1e-12)
    assert 0.0 <= u_lo <= u_up <= 1.0


def test_absorbing_map_keeps_all_mass_inside():
    model = Affine(A=[[0.0]], c=[0.0], sigma=[1.0])
    part = make_grid(Box([-1e6], [1e6]), (1,), Box([-1.0], [1.0]))
    tb = affine_bounds(model, part)
    lo, up = tb.row_dense(0)
    assert lo[0] == pytest.approx(1.0, abs=1e-9)
    assert up[0] <= 1.0
    assert tb.u_upper[0] <= 1e-9


def test_affine_bounds_two_cell_hand_oracle():
    model = Affine(A=[[0.5]], c=[0.0], sigma=[0.1])
    part = make_grid(Box([0.0], [0.4]), (2,), Box([0.0], [0.1]))
    tb = affine_bounds(model, part)
    lo, up = tb.row_dense(0)
    # source cell [0, 0.2] has mean interval [0, 0.1]
    lo00, up00 = interval_prob(0.0, 0.1, 0.0, 0.2, 0.1)
    lo01, up01 = interval_prob(0.0, 0.1, 0.2, 0.4, 0.1)
    assert up[0] == pytest.approx(up00, abs=1e-12)
    assert lo[0] == pytest.approx(lo00, abs=1e-12)
    assert up[1] == pytest.approx(up01, abs=1e-12)
    assert lo[1] == pytest.approx(lo01, abs=1e-12)
    # without obstacles the unsafe mass is exactly the domain-escape mass
    s_lo, s_up = interval_prob(0.0, 0.1, 0.0, 0.4, 0.1)
    assert up[2] == pytest.approx(1.0 - s_lo, abs=1e-12)
    assert lo[2] == pytest.approx(max(0.0, 1.0 - s_up), abs=1e-12)


def test_affine_bounds_contain_sampled_true_probabilities():
    rng = np.random.default_rng(42)
    for _ in range(10):
        dim = int(rng.integers(1, 3))
        A = rng.uniform(-0.8, 0.8, size=(dim, dim))
        c = rng.uniform(-0.2, 0.2, size=dim)
        sigma = rng.uniform(0.1, 0.5, size=dim)
        model = Affine(A=A, c=c, sigma=sigma)
        domain = Box(np.full(dim, -2.0), np.full(dim, 2.0))
        counts = (4,) * dim
        part = make_grid(domain, counts, Box(np.full(dim, -2.0), np.full(dim, -1.5)))
        tb = affine_bounds(model, part)
        for i in range(part.K):
            cell = part.cell_box(int(part.decision_indices[i]))
            xs = rng.uniform(cell.lo, cell.hi, size=(100, dim))
            lo, up = tb.row_dense(i)
            for j in range(part.K):
                target = part.cell_box(int(part.decision_indices[j]))
                probs = gaussian_box_prob(model.mean_step(xs), sigma, target)
                assert np.all(probs >= lo[j] - 1e-9)
                assert np.all(probs <= up[j] + 1e-9)


def test_rows_are_always_feasible_on_random_systems():
    rng = np.random.default_rng(5)
    for _ in range(10):
        A = rng.uniform(-1.0, 1.0, size=(2, 2))
        model = Affine(A=A, c=rng.uniform(-0.5, 0.5, 2), sigma=rng.uniform(0.05, 0.3, 2))
        part = make_grid(
            Box([-1.0, -1.0], [1.0, 1.0]), (5, 5), Box([-1.0, -1.0], [-0.6, -0.6])
        )
        tb = affine_bounds(model, part)
        assert np.all(tb.row_lower_sums() <= 1.0 + 1e-12)
        assert np.all(tb.row_upper_sums() >= 1.0 - 1e-12)


def test_interval_map_reproduces_affine_bounds():
    A = np.array([[0.4, -0.3], [0.2, 0.5]])
    c = np.array([0.05, -0.1])
    sigma = np.array([0.15, 0.2])
    model = Affine(A=A, c=c, sigma=sigma)
    part = make_grid(
        Box([-1.0, -1.0], [1.0, 1.0]), (4, 4), Box([-1.0, -1.0], [-0.5, -0.5])
    )

    def exact_image(cell: Box) -> Box:
        corners = np.array(
            [[x, y] for x in (cell.lo[0], cell.hi[0]) for y in (cell.lo[1], cell.hi[1])]
        )
        img = corners @ A.T + c
        return Box(img.min(axis=0), img.max(axis=0))

    imap = IntervalMap.from_function(part, exact_image, sigma)
    tb_map = interval_map_bounds(imap, part)
    tb_aff = affine_bounds(model, part)
    assert tb_map.K == tb_aff.K
    for i in range(tb_aff.K):
        lo_m, up_m = tb_map.row_dense(i)
        lo_a, up_a = tb_aff.row_dense(i)
        assert np.allclose(lo_m, lo_a, atol=1e-12)
        assert np.allclose(up_m, up_a, atol=1e-12)


def test_near_deterministic_map_concentrates_on_its_target_cell():
    part = make_grid(Box([0.0], [1.0]), (2,), Box([0.0], [0.25]))
    images = {0: Box([0.05], [0.45]), 1: Box([0.55], [0.95])}
    imap = IntervalMap(images=images, sigma=[1e-6])
    tb = interval_map_bounds(imap, part)
    for i in range(2):
        lo, up = tb.row_dense(i)
        assert lo[i] == pytest.approx(1.0, abs=1e-9)
        other = 1 - i
        assert up[other] <= 1e-9
        assert tb.u_upper[i] <= 1e-9


def test_missing_image_is_reported():
    part = make_grid(Box([0.0], [1.0]), (2,), Box([0.0], [0.25]))
    imap = IntervalMap(images={0: Box([0.1], [0.4])}, sigma=[0.1])
    with pytest.raises(MissingImage):
        interval_map_bounds(imap, part)


# ----- constructors and validation -------------------------------------------


def test_from_dense_round_trips_through_row_dense():
    lower = np.array([[0.1, 0.2], [0.0, 0.5]])
    upper = np.array([[0.4, 0.6], [0.3, 0.9]])
    tb = TransitionBounds.from_dense(lower, upper, [0.0, 0.1], [0.5, 0.3])
    for i in range(2):
        lo, up = tb.row_dense(i)
        assert np.allclose(lo[:2], lower[i])
        assert np.allclose(up[:2], upper[i])
    assert np.allclose(tb.u_lower, [0.0, 0.1])
    assert np.allclose(tb.u_upper, [0.5, 0.3])


def test_from_entries_accepts_unsafe_column_labels():
    tb = TransitionBounds.from_entries(
        2,
        [(0, 0, 0.2, 0.6), (0, "u", 0.1, 0.8), (1, 1, 0.0, 1.0), (1, 2, 0.0, 0.2)],
    )
    assert tb.u_lower[0] == 0.1 and tb.u_upper[0] == 0.8
    assert tb.u_lower[1] == 0.0 and tb.u_upper[1] == 0.2


def test_duplicate_entry_is_rejected():
    with pytest.raises(InvariantViolation):
        TransitionBounds.from_entries(2, [(0, 1, 0.1, 0.2), (0, 1, 0.1, 0.3)])


def test_inverted_interval_is_rejected():
    with pytest.raises(InvariantViolation):
        TransitionBounds.from_dense([[0.5]], [[0.4]], [0.0], [1.0])


def test_infeasible_row_is_rejected():
    # upper mass sums to 0.7 < 1: the ambiguity set would be empty
    with pytest.raises(InfeasibleRow):
        TransitionBounds.from_dense([[0.0]], [[0.5]], [0.0], [0.2])


def test_sigma_validation_on_models():
    with pytest.raises(InvariantViolation):
        Affine(A=[[1.0]], c=[0.0], sigma=[0.0])
    with pytest.raises(DimensionMismatch):
        Affine(A=[[1.0, 0.0]], c=[0.0], sigma=[1.0])
    with pytest.raises(DimensionMismatch):
        Affine(A=[[1.0]], c=[0.0, 0.0], sigma=[1.0])
    with pytest.raises(InvariantViolation):
        IntervalMap(images={}, sigma=[-1.0])
    with pytest.raises(InvariantViolation):
        ClosedForm(fn=lambda x: x, sigma=[0.0])


# ----- export / import --------------------------------------------------------


@pytest.mark.parametrize("suffix", ["csv", "json"])
def test_export_import_round_trip_is_lossless(tmp_path, suffix):
    rng = np.random.default_rng(9)
    base = rng.dirichlet(np.ones(4), size=3)[:, :3] * 0.8
    width = rng.uniform(0.0, 0.1, size=(3, 3))
    upper = np.clip(base + width, 0.0, 1.0)
    tb = TransitionBounds.from_dense(base, upper, np.zeros(3), np.full(3, 0.9))
    path = tmp_path / f"bounds.{suffix}"
    export_bounds(tb, path)
    back = import_bounds(path)
    assert back == tb


def test_import_rejects_inverted_interval_naming_the_entry(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("i,j,lower,upper\n1,1,0.9,0.4\n1,u,0.0,1.0\n")
    with pytest.raises(InvariantViolation, match=r"\(0, 0\)"):
        import_bounds(path)


def test_import_rejects_infeasible_row(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("i,j,lower,upper\n1,1,0.0,0.4\n1,u,0.0,0.2\n")
    with pytest.raises(InfeasibleRow):
        import_bounds(path)


def test_import_rejects_malformed_file(tmp_path):
    path = tmp_path / "junk.csv"
    path.write_text("i,j,lower,upper\n1,1,abc,0.4\n")
    with pytest.raises(ParseError):
        import_bounds(path)
    short = tmp_path / "short.csv"
    short.write_text("i,j,lower,upper\n1,1,0.2\n")
    with pytest.raises(ParseError):
        import_bounds(short)
