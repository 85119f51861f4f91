"""Cumulative dose, W-equivalence, and the longitudinal-to-static reduction."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dosepair.longitudinal import (
    AggregateOutcomeSpec,
    CumulativeDoseSpec,
    aggregate_outcome,
    cumulative_dose,
    reduce_to_static,
    w_equivalent,
)
from dosepair.model import UnitRecord

small_floats = st.floats(min_value=-10, max_value=10, allow_nan=False)


def uniform_spec(n, ref=0.0, lag=0):
    return CumulativeDoseSpec(reference_trajectory=np.full(n, ref),
                              weights=np.ones(n), lag=lag)


# ---------------------------------------------------------------------------
# cumulative dose


def test_worked_example_is_exactly_one_tenth():
    # three days at (-0.3, -0.4, -0.5) against a flat -0.5 reference with
    # uniform weights: mean excess (0.2 + 0.1 + 0.0)/3 = 0.1 exactly
    spec = uniform_spec(3, ref=-0.5)
    assert cumulative_dose([-0.3, -0.4, -0.5], spec) == 0.1


def test_reference_trajectory_maps_to_zero():
    spec = uniform_spec(5, ref=-0.5)
    assert cumulative_dose(np.full(5, -0.5), spec) == 0.0


def test_weights_normalize_and_lag_zeroes_tail():
    spec = CumulativeDoseSpec(reference_trajectory=np.zeros(4),
                              weights=np.array([1.0, 1.0, 1.0, 1.0]), lag=2)
    np.testing.assert_allclose(spec.weights, [0.5, 0.5, 0.0, 0.0], atol=1e-15)
    assert spec.lag == 2 and spec.window_length == 4
    # the lagged days cannot move the cumulative dose
    assert cumulative_dose([1.0, 2.0, 99.0, -99.0], spec) == \
        cumulative_dose([1.0, 2.0, 0.0, 0.0], spec)


def test_nonuniform_weights_hand_value():
    spec = CumulativeDoseSpec(reference_trajectory=np.zeros(2),
                              weights=np.array([3.0, 1.0]))
    # (3*2 + 1*6)/4 = 3
    assert cumulative_dose([2.0, 6.0], spec) == 3.0


def test_spec_validation():
    with pytest.raises(ValueError, match="match reference shape"):
        CumulativeDoseSpec(reference_trajectory=np.zeros(3), weights=np.ones(2))
    with pytest.raises(ValueError, match="lag"):
        CumulativeDoseSpec(reference_trajectory=np.zeros(3), weights=np.ones(3),
                           lag=4)
    with pytest.raises(ValueError, match="nonnegative"):
        CumulativeDoseSpec(reference_trajectory=np.zeros(2),
                           weights=np.array([1.0, -1.0]))
    with pytest.raises(ValueError, match="sum to zero"):
        CumulativeDoseSpec(reference_trajectory=np.zeros(2), weights=np.ones(2),
                           lag=2)
    with pytest.raises(ValueError, match="finite"):
        CumulativeDoseSpec(reference_trajectory=np.array([0.0, np.inf]),
                           weights=np.ones(2))


def test_cumulative_dose_validation():
    spec = uniform_spec(3)
    with pytest.raises(ValueError, match="length 2"):
        cumulative_dose([1.0, 2.0], spec)
    with pytest.raises(ValueError, match="finite"):
        cumulative_dose([1.0, np.nan, 2.0], spec)


@settings(max_examples=100, deadline=None)
@given(st.lists(small_floats, min_size=1, max_size=20), small_floats)
def test_constant_shift_moves_cd_by_the_shift(zs, c):
    spec = uniform_spec(len(zs))
    z = np.array(zs)
    assert abs(cumulative_dose(z + c, spec) -
               (cumulative_dose(z, spec) + c)) < 1e-9


@settings(max_examples=100, deadline=None)
@given(st.lists(small_floats, min_size=2, max_size=12), st.randoms())
def test_uniform_weight_permutation_invariance(zs, pyrandom):
    spec = uniform_spec(len(zs))
    perm = list(range(len(zs)))
    pyrandom.shuffle(perm)
    z = np.array(zs)
    assert abs(cumulative_dose(z, spec) - cumulative_dose(z[perm], spec)) < 1e-12


# ---------------------------------------------------------------------------
# W-equivalence


def test_w_equivalence_detects_equal_cumulative_doses():
    spec = uniform_spec(4)
    assert w_equivalent([1.0, 0.0, 0.0, 1.0], [0.0, 1.0, 1.0, 0.0], spec)
    assert not w_equivalent([1.0, 0.0, 0.0, 1.0], [1.0, 1.0, 1.0, 1.0], spec)


def test_w_equivalence_tolerance_is_scale_free():
    spec = uniform_spec(3)
    a = np.array([0.1, 0.2, 0.3])
    b = np.array([0.3, 0.2, 0.1])
    assert w_equivalent(a, b, spec)
    assert w_equivalent(a * 1e9, b * 1e9, spec)


def test_lag_extends_equivalence_classes():
    # trajectories that differ only inside the lag window are equivalent
    spec = uniform_spec(4, lag=2)
    assert w_equivalent([1.0, 2.0, 5.0, 5.0], [1.0, 2.0, -7.0, 0.0], spec)
    assert not w_equivalent([1.0, 2.0, 0.0, 0.0], [2.0, 1.5, 0.0, 0.0], spec)


# ---------------------------------------------------------------------------
# aggregation and reduction


def test_aggregate_outcome_sum_window():
    spec = AggregateOutcomeSpec(start=1, end=3)
    assert spec.length == 3
    assert aggregate_outcome([1.0, 2.0, 3.0, 4.0, 5.0], spec) == 9.0
    with pytest.raises(ValueError, match="outside"):
        aggregate_outcome([1.0, 2.0], spec)
    with pytest.raises(ValueError, match="unknown aggregator"):
        AggregateOutcomeSpec(start=0, end=1, aggregator="mean")
    with pytest.raises(ValueError, match="start <= end"):
        AggregateOutcomeSpec(start=3, end=1)


def test_reduce_to_static_matches_componentwise(rng):
    n_days = 10
    spec = CumulativeDoseSpec(reference_trajectory=np.full(n_days, -0.5),
                              weights=np.ones(n_days), lag=3)
    agg = AggregateOutcomeSpec(start=2, end=4)
    units = [UnitRecord(id=f"u{k}", covariates=rng.normal(size=2),
                        exact_match_keys=(k % 2,),
                        dose_trajectory=rng.uniform(-1, 0, n_days),
                        outcome_trajectory=rng.uniform(0, 5, n_days))
             for k in range(6)]
    static = reduce_to_static(units, spec, agg)
    for u, s in zip(units, static):
        assert s.dose == cumulative_dose(u.dose_trajectory, spec)
        assert s.outcome == aggregate_outcome(u.outcome_trajectory, agg)
        assert s.dose_trajectory is None and s.outcome_trajectory is None
        assert s.id == u.id and s.exact_match_keys == u.exact_match_keys
        np.testing.assert_array_equal(s.covariates, u.covariates)


def test_reduce_to_static_lag_window_constraint():
    spec = uniform_spec(6, lag=3)
    units = [UnitRecord(id="u0", dose_trajectory=np.zeros(6),
                        outcome_trajectory=np.zeros(6))]
    with pytest.raises(ValueError, match="must equal lag"):
        reduce_to_static(units, spec, AggregateOutcomeSpec(start=0, end=1))
    out = reduce_to_static(units, spec, AggregateOutcomeSpec(start=3, end=5))
    assert out[0].dose == 0.0


def test_reduce_to_static_requires_trajectories():
    spec = uniform_spec(3)
    agg = AggregateOutcomeSpec(start=0, end=2)
    with pytest.raises(ValueError, match="no dose trajectory"):
        reduce_to_static([UnitRecord(id="a", dose=1.0,
                                     outcome_trajectory=np.zeros(3))], spec, agg)
    with pytest.raises(ValueError, match="no outcome trajectory"):
        reduce_to_static([UnitRecord(id="a", dose_trajectory=np.zeros(3),
                                     outcome=1.0)], spec, agg)
