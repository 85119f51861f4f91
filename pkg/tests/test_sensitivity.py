"""Biased-coin reference distributions and the sensitivity curve."""

import math

import numpy as np
import pytest

from conftest import fixture_table
from dosepair.inference import randomization_p_value
from dosepair.model import DoseResponseHypothesis
from dosepair.sensitivity import GammaModel, biased_p_value, sensitivity_curve

SEPARATED = DoseResponseHypothesis(family="proportional", beta=2.0)


# ---------------------------------------------------------------------------
# GammaModel


def test_gamma_model_validation():
    with pytest.raises(ValueError, match="unknown mode"):
        GammaModel(mode="linear")
    with pytest.raises(ValueError, match=">= 1"):
        GammaModel(mode="constant", gamma=0.5)
    with pytest.raises(ValueError, match=">= 0"):
        GammaModel(mode="dose_gap_proportional", lam=-0.1)


def test_gamma_values_per_pair():
    _, _, t = fixture_table(5, SEPARATED, seed=0)
    const = GammaModel(mode="constant", gamma=2.5).gammas(t)
    np.testing.assert_array_equal(const, np.full(5, 2.5))
    lam = 0.7
    prop = GammaModel(mode="dose_gap_proportional", lam=lam).gammas(t)
    np.testing.assert_allclose(prop, np.exp(lam * (t.dose_hi - t.dose_lo)),
                               rtol=1e-15)


# ---------------------------------------------------------------------------
# biased p-value


def test_unit_gamma_is_bit_identical_to_unbiased():
    for I, cap in ((10, 1 << 16), (25, 1)):        # exact then MC
        _, _, t = fixture_table(I, SEPARATED, seed=1)
        for gm in (GammaModel(mode="constant", gamma=1.0),
                   GammaModel(mode="dose_gap_proportional", lam=0.0)):
            a = biased_p_value(t, gm, mc_draws=4000, seed=3, enumeration_cap=cap)
            b = randomization_p_value(t, mc_draws=4000, seed=3,
                                      enumeration_cap=cap)
            assert a.p_value == b.p_value
            assert a.statistic_observed == b.statistic_observed
            assert a.mode == b.mode


def test_enormous_gamma_degenerates_at_observed():
    _, _, t = fixture_table(8, SEPARATED, seed=2)
    exact = biased_p_value(t, GammaModel(mode="constant", gamma=1e12))
    assert exact.mode == "exact"
    assert exact.p_value >= 1.0 - 1e-9
    mc = biased_p_value(t, GammaModel(mode="constant", gamma=1e12),
                        mc_draws=2000, seed=0, enumeration_cap=1)
    assert mc.p_value == 1.0                       # every draw keeps observed


def test_biased_exact_agrees_with_mc():
    _, _, t = fixture_table(8, SEPARATED, seed=3)
    gm = GammaModel(mode="constant", gamma=2.0)
    p_exact = biased_p_value(t, gm).p_value
    p_mc = biased_p_value(t, gm, mc_draws=40_000, seed=5,
                          enumeration_cap=1).p_value
    se = math.sqrt(p_exact * (1.0 - p_exact) / 40_000)
    assert abs(p_exact - p_mc) <= 3 * se + 1e-12


def test_direction_validation():
    _, _, t = fixture_table(4, SEPARATED, seed=4)
    with pytest.raises(ValueError, match="unknown direction"):
        biased_p_value(t, GammaModel(mode="constant", gamma=2.0),
                       direction="best_case")


def test_biased_p_is_monotone_in_gamma_exact():
    _, _, t = fixture_table(10, SEPARATED, noise_sd=0.4, seed=5)
    ps = [biased_p_value(t, GammaModel(mode="constant", gamma=g)).p_value
          for g in (1.0, 1.5, 2.0, 3.0, 5.0, 10.0, 100.0)]
    assert all(b >= a - 1e-12 for a, b in zip(ps, ps[1:]))


# ---------------------------------------------------------------------------
# sensitivity curve


def test_curve_grid_validation():
    _, _, t = fixture_table(4, SEPARATED, seed=6)
    with pytest.raises(ValueError, match="empty"):
        sensitivity_curve(t, "constant", [])
    with pytest.raises(ValueError, match="increasing"):
        sensitivity_curve(t, "constant", [0.0, 0.5, 0.5])
    with pytest.raises(ValueError, match="nonnegative"):
        sensitivity_curve(t, "constant", [-0.1, 0.5])


def test_curve_zero_point_equals_unbiased():
    _, _, t = fixture_table(10, SEPARATED, seed=7)
    curve = sensitivity_curve(t, "constant", [0.0, 0.5, 1.0])
    assert curve.p_values[0] == randomization_p_value(t).p_value
    # in constant mode the grid parameterizes Gamma = exp(lambda)
    np.testing.assert_allclose(curve.median_gammas, np.exp([0.0, 0.5, 1.0]),
                               rtol=1e-12)


def test_curve_changepoint_brackets_alpha():
    # strongly separated data: p(0) is small and rejection survives some
    # bias before failing inside the grid
    _, _, t = fixture_table(12, SEPARATED, noise_sd=0.3, seed=8)
    grid = [0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0]
    curve = sensitivity_curve(t, "constant", grid, alpha=0.05)
    assert curve.p_values[0] < 0.05
    assert not curve.at_grid_boundary
    lam = curve.changepoint_lambda
    assert lam is not None and grid[0] <= lam < grid[-1]

    def p_at(l):
        return biased_p_value(t, GammaModel(mode="constant",
                                            gamma=math.exp(l))).p_value

    assert p_at(lam) <= 0.05
    assert p_at(lam + 1e-6) > 0.05 or p_at(lam) == 0.05
    assert abs(curve.changepoint_median_gamma - math.exp(lam)) < 1e-9


def test_curve_not_rejected_at_zero():
    # null data with alpha tiny: no rejection anywhere
    _, _, t = fixture_table(10, DoseResponseHypothesis(family="null"), seed=9)
    curve = sensitivity_curve(t, "constant", [0.0, 1.0], alpha=1e-6)
    assert curve.changepoint_lambda is None
    assert curve.changepoint_median_gamma is None
    assert not curve.at_grid_boundary


def test_curve_rejects_across_whole_grid():
    _, _, t = fixture_table(14, SEPARATED, noise_sd=0.1, seed=10)
    curve = sensitivity_curve(t, "constant", [0.0, 0.1, 0.2], alpha=0.05)
    assert curve.at_grid_boundary
    assert curve.changepoint_lambda == 0.2


def test_curve_dose_gap_mode_medians():
    _, _, t = fixture_table(9, SEPARATED, seed=11)
    curve = sensitivity_curve(t, "dose_gap_proportional", [0.0, 0.5])
    gaps = t.dose_hi - t.dose_lo
    np.testing.assert_allclose(
        curve.median_gammas,
        [1.0, float(np.median(np.exp(0.5 * gaps)))], rtol=1e-12)
