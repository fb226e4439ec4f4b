"""Generative property tests for scalar invariants of the public API."""

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from pwcbarrier.ambiguity import AmbiguitySet, worst_case_value
from pwcbarrier.synth import safety_bound
from pwcbarrier.validate import wilson_interval

SETTINGS = settings(derandomize=True, max_examples=200, deadline=None)


@SETTINGS
@given(
    trials=st.integers(1, 10**6),
    frac=st.floats(0.0, 1.0),
    confidence=st.floats(0.5, 0.9999),
)
def test_wilson_interval_contains_the_estimate(trials, frac, confidence):
    successes = min(trials, int(round(frac * trials)))
    lo, hi = wilson_interval(successes, trials, confidence)
    assert 0.0 <= lo <= successes / trials <= hi <= 1.0


@SETTINGS
@given(trials=st.integers(2, 10**5), frac=st.floats(0.0, 1.0))
def test_wilson_bounds_grow_with_the_success_count(trials, frac):
    successes = min(trials - 1, int(round(frac * (trials - 1))))
    lo_a, hi_a = wilson_interval(successes, trials)
    lo_b, hi_b = wilson_interval(successes + 1, trials)
    assert lo_b >= lo_a - 1e-12
    assert hi_b >= hi_a - 1e-12


@SETTINGS
@given(
    eta=st.floats(0.0, 2.0),
    beta=st.floats(0.0, 1.0),
    bump=st.floats(0.0, 1.0),
    horizon=st.integers(0, 100),
)
def test_safety_bound_is_clamped_and_antitone(eta, beta, bump, horizon):
    base = safety_bound(eta, beta, horizon)
    assert 0.0 <= base <= 1.0
    assert safety_bound(eta + bump, beta, horizon) <= base
    assert safety_bound(eta, beta + bump, horizon) <= base


@SETTINGS
@given(
    weights=st.lists(st.floats(0.01, 1.0), min_size=1, max_size=8),
    values=st.lists(st.floats(0.0, 1.0), min_size=1, max_size=8),
    shrink=st.floats(0.0, 1.0),
    widen=st.floats(0.0, 1.0),
)
def test_worst_case_stays_inside_the_value_range(weights, values, shrink, widen):
    n = min(len(weights), len(values))
    nominal = np.asarray(weights[:n]) / np.sum(weights[:n])
    lower = shrink * nominal
    upper = nominal + widen * (1.0 - nominal)
    value, p = worst_case_value(AmbiguitySet(lower, upper), values[:n])
    v = np.asarray(values[:n])
    assert v.min() - 1e-12 <= value <= v.max() + 1e-12
    assert abs(p.sum() - 1.0) <= 1e-9
