"""Dose-response hypotheses, dataset validation, and balance diagnostics."""

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dosepair.model import (
    BalanceRow,
    DoseResponseHypothesis,
    MatchedPair,
    UnitRecord,
    evaluate_model,
    evaluate_model_array,
    standardized_differences,
    units_by_id,
    validate_dataset,
)

finite_doses = st.floats(min_value=-50, max_value=50, allow_nan=False)


# ---------------------------------------------------------------------------
# model evaluation


def test_kink_hand_values():
    h = DoseResponseHypothesis(family="kink", tau=1.0, beta=0.3)
    assert evaluate_model(h, 0.5) == 0.0
    assert evaluate_model(h, 1.0) == 0.0          # flat up to and including tau
    assert abs(evaluate_model(h, 2.2) - 0.36) < 1e-12
    assert abs(evaluate_model(h, 3.0) - 0.6) < 1e-12


def test_proportional_hand_values():
    h = DoseResponseHypothesis(family="proportional", beta=2.0, reference_dose=1.0)
    assert evaluate_model(h, 3.0) == 4.0
    assert evaluate_model(h, 0.0) == -2.0
    assert evaluate_model(h, 1.0) == 0.0


def test_null_is_identically_zero():
    h = DoseResponseHypothesis(family="null")
    for z in (-10.0, 0.0, 1e6, math.inf):
        assert evaluate_model(h, z) == 0.0


def test_kink_with_zero_beta_equals_null():
    kink = DoseResponseHypothesis(family="kink", tau=1.0, beta=0.0)
    null = DoseResponseHypothesis(family="null")
    z = np.linspace(-5, 5, 101)
    np.testing.assert_array_equal(evaluate_model_array(kink, z),
                                  evaluate_model_array(null, z))


def test_kink_with_infinite_tau_equals_null():
    kink = DoseResponseHypothesis(family="kink", tau=math.inf, beta=3.0)
    z = np.linspace(-5, 5, 101)
    np.testing.assert_array_equal(evaluate_model_array(kink, z), np.zeros(101))


@given(st.lists(finite_doses, min_size=1, max_size=30),
       st.floats(min_value=-5, max_value=5, allow_nan=False),
       st.floats(min_value=-3, max_value=3, allow_nan=False))
def test_array_evaluation_matches_scalar(zs, tau, beta):
    for h in (DoseResponseHypothesis(family="null"),
              DoseResponseHypothesis(family="proportional", beta=beta),
              DoseResponseHypothesis(family="kink", tau=tau, beta=beta,
                                     reference_dose=min(tau, 0.0))):
        arr = evaluate_model_array(h, np.array(zs))
        scalars = np.array([evaluate_model(h, z) for z in zs])
        np.testing.assert_array_equal(arr, scalars)


@given(finite_doses, st.floats(min_value=-3, max_value=3, allow_nan=False))
def test_model_vanishes_at_reference_dose(ref, beta):
    # every family satisfies f(z*) = 0
    for h in (DoseResponseHypothesis(family="null", reference_dose=ref),
              DoseResponseHypothesis(family="proportional", beta=beta,
                                     reference_dose=ref),
              DoseResponseHypothesis(family="kink", tau=ref, beta=beta,
                                     reference_dose=ref)):
        assert evaluate_model(h, ref) == 0.0


def test_kink_log_forces_log_link():
    h = DoseResponseHypothesis(family="kink_log", tau=1.0, beta=0.5)
    assert h.link == "log"


def test_hypothesis_validation_errors():
    with pytest.raises(ValueError, match="unknown family"):
        DoseResponseHypothesis(family="cubic")
    with pytest.raises(ValueError, match="unknown link"):
        DoseResponseHypothesis(family="proportional", link="probit")
    with pytest.raises(ValueError, match="log_offset"):
        DoseResponseHypothesis(family="proportional", link="log", log_offset=-1.0)
    with pytest.raises(ValueError, match="must not exceed tau"):
        DoseResponseHypothesis(family="kink", tau=1.0, beta=0.5, reference_dose=2.0)
    with pytest.raises(ValueError, match="NaN"):
        DoseResponseHypothesis(family="kink", tau=math.nan, beta=0.5)


# ---------------------------------------------------------------------------
# pairs and units


def test_matched_pair_validation():
    with pytest.raises(ValueError, match="distinct"):
        MatchedPair("a", "a", 0.0, 0.0, 1.0)
    with pytest.raises(ValueError, match="exceeds dose_hi"):
        MatchedPair("a", "b", 0.0, 2.0, 1.0)
    with pytest.raises(ValueError, match="nonnegative"):
        MatchedPair("a", "b", -1.0, 0.0, 1.0)


def test_units_by_id_rejects_duplicates():
    u = UnitRecord(id="a", dose=0.0, outcome=0.0)
    with pytest.raises(ValueError, match="duplicate"):
        units_by_id([u, u])


def test_validate_dataset_empty():
    with pytest.raises(ValueError, match="empty dataset"):
        validate_dataset([])


def test_validate_dataset_clean():
    units = [UnitRecord(id=f"u{k}", covariates=[1.0, 2.0], dose=float(k),
                        outcome=0.0) for k in range(4)]
    report = validate_dataset(units)
    assert report.ok and report.violations == ()


def test_validate_dataset_collects_violations():
    units = [
        UnitRecord(id="a", covariates=[1.0], dose=0.0, outcome=0.0),
        UnitRecord(id="a", covariates=[1.0], dose=0.0, outcome=0.0),
        UnitRecord(id="b", covariates=[1.0, 2.0], dose=0.0, outcome=0.0),
        UnitRecord(id="c", covariates=[np.nan], dose=0.0, outcome=0.0),
        UnitRecord(id="d", covariates=[1.0], outcome=0.0),
        UnitRecord(id="e", covariates=[1.0], dose=0.0, dose_trajectory=[1.0],
                   outcome=0.0),
        UnitRecord(id="f", covariates=[1.0], dose=math.inf, outcome=0.0),
        UnitRecord(id="g", covariates=[1.0], dose=0.0),
        UnitRecord(id="h", covariates=[1.0], dose=0.0, outcome=0.0,
                   outcome_trajectory=[1.0]),
    ]
    report = validate_dataset(units)
    assert not report.ok
    text = "\n".join(report.violations)
    assert "duplicate id 'a'" in text
    assert "covariate length mismatch for 'b'" in text
    assert "non-finite covariate for 'c'" in text
    assert "unit 'd' must set exactly one of dose/dose_trajectory" in text
    assert "unit 'e' must set exactly one of dose/dose_trajectory" in text
    assert "non-finite dose for 'f'" in text
    assert "unit 'g' must set exactly one of outcome/outcome_trajectory" in text
    assert "unit 'h' must set exactly one of outcome/outcome_trajectory" in text


def test_validate_dataset_trajectory_length_mismatch():
    units = [
        UnitRecord(id="a", dose_trajectory=[1.0, 2.0], outcome_trajectory=[1.0]),
        UnitRecord(id="b", dose_trajectory=[1.0], outcome_trajectory=[1.0, 2.0]),
    ]
    report = validate_dataset(units)
    text = "\n".join(report.violations)
    assert "dose trajectory length mismatch for 'b'" in text
    assert "outcome trajectory length mismatch for 'b'" in text


# ---------------------------------------------------------------------------
# balance


def _pairs_from(lo_units, hi_units):
    return [MatchedPair(a.id, b.id, 0.0, a.dose, b.dose)
            for a, b in zip(lo_units, hi_units)]


def test_standardized_difference_hand_value():
    # lo covariates {1, 3}, hi {2, 6}: means 2 and 4, variances 2 and 8,
    # pooled sd sqrt(5), so the standardized difference is 2/sqrt(5)
    lo = [UnitRecord(id="l0", covariates=[1.0], dose=0.0, outcome=0.0),
          UnitRecord(id="l1", covariates=[3.0], dose=0.0, outcome=0.0)]
    hi = [UnitRecord(id="h0", covariates=[2.0], dose=1.0, outcome=0.0),
          UnitRecord(id="h1", covariates=[6.0], dose=1.0, outcome=0.0)]
    rows = standardized_differences(_pairs_from(lo, hi), lo + hi)
    assert len(rows) == 1
    assert isinstance(rows[0], BalanceRow)
    assert rows[0].mean_lo == 2.0 and rows[0].mean_hi == 4.0
    assert abs(rows[0].standardized_difference - 2.0 / math.sqrt(5.0)) < 1e-12


def test_standardized_difference_degenerate_cases():
    # equal group means with zero variance report 0, not nan
    lo = [UnitRecord(id=f"l{k}", covariates=[5.0], dose=0.0, outcome=0.0)
          for k in range(2)]
    hi = [UnitRecord(id=f"h{k}", covariates=[5.0], dose=1.0, outcome=0.0)
          for k in range(2)]
    rows = standardized_differences(_pairs_from(lo, hi), lo + hi)
    assert rows[0].standardized_difference == 0.0

    # nonzero difference over zero pooled sd reports a signed infinity
    hi = [UnitRecord(id=f"h{k}", covariates=[7.0], dose=1.0, outcome=0.0)
          for k in range(2)]
    rows = standardized_differences(_pairs_from(lo, hi), lo + hi)
    assert rows[0].standardized_difference == math.inf
    lo2 = [UnitRecord(id=f"m{k}", covariates=[9.0], dose=0.0, outcome=0.0)
           for k in range(2)]
    rows = standardized_differences(_pairs_from(lo2, hi), lo2 + hi)
    assert rows[0].standardized_difference == -math.inf


def test_standardized_difference_antisymmetry(rng):
    # swapping the role of the two groups negates every row
    n = 8
    lo = [UnitRecord(id=f"l{k}", covariates=rng.normal(size=3), dose=0.0,
                     outcome=0.0) for k in range(n)]
    hi = [UnitRecord(id=f"h{k}", covariates=rng.normal(size=3), dose=1.0,
                     outcome=0.0) for k in range(n)]
    fwd = standardized_differences(_pairs_from(lo, hi), lo + hi)
    # same covariates with the dose order reversed
    lo_sw = [UnitRecord(id=u.id, covariates=u.covariates, dose=1.0, outcome=0.0)
             for u in lo]
    hi_sw = [UnitRecord(id=u.id, covariates=u.covariates, dose=0.0, outcome=0.0)
             for u in hi]
    rev = standardized_differences(_pairs_from(hi_sw, lo_sw), lo_sw + hi_sw)
    for a, b in zip(fwd, rev):
        assert abs(a.standardized_difference + b.standardized_difference) < 1e-12


def test_standardized_difference_unknown_unit():
    lo = UnitRecord(id="l", covariates=[1.0], dose=0.0, outcome=0.0)
    hi = UnitRecord(id="h", covariates=[2.0], dose=1.0, outcome=0.0)
    pair = MatchedPair("l", "h", 0.0, 0.0, 1.0)
    with pytest.raises(KeyError, match="unresolved"):
        standardized_differences([pair], [lo])


def test_covariate_names_flow_into_balance():
    lo = [UnitRecord(id="l0", covariates=[1.0, 2.0], dose=0.0, outcome=0.0,
                     covariate_names=("age", "income")),
          UnitRecord(id="l1", covariates=[2.0, 3.0], dose=0.0, outcome=0.0,
                     covariate_names=("age", "income"))]
    hi = [UnitRecord(id="h0", covariates=[1.5, 2.5], dose=1.0, outcome=0.0,
                     covariate_names=("age", "income")),
          UnitRecord(id="h1", covariates=[2.5, 3.5], dose=1.0, outcome=0.0,
                     covariate_names=("age", "income"))]
    rows = standardized_differences(_pairs_from(lo, hi), lo + hi)
    assert [r.covariate for r in rows] == ["age", "income"]
