"""Spillover-aware imputation and the interference randomization test."""

import itertools
import math

import numpy as np
import pytest

from conftest import fixture_table
from dosepair.inference import (
    impute_pair_table,
    ks_statistic,
    test_fixed as fixed_test,
)
from dosepair.interference import (
    AdjacencyGraph,
    InterferenceParams,
    impute_under_interference,
    neighbor_mean_excess_dose,
    spillover_factor,
    test_interference as interference_test,
)
from dosepair.model import DoseResponseHypothesis


def ring_graph(ids):
    n = len(ids)
    return AdjacencyGraph.from_edges([(ids[k], ids[(k + 1) % n]) for k in range(n)])


# ---------------------------------------------------------------------------
# graph


def test_from_edges_dedupes_and_drops_self_loops():
    g = AdjacencyGraph.from_edges([("a", "b"), ("b", "a"), ("a", "b"), ("c", "c")],
                                  nodes=["d"])
    assert g.n_edges == 1
    # the self loop is dropped whole: "c" only exists if passed via nodes
    assert g.ids == ("a", "b", "d")
    assert g.neighbors("a") == ("b",)
    assert g.degree("b") == 1 and g.degree("d") == 0
    assert g.degree("not_a_node") == 0 and g.neighbors("zzz") == ()


def test_neighbors_are_sorted():
    g = AdjacencyGraph.from_edges([("m", "z"), ("m", "a"), ("m", "k")])
    assert g.neighbors("m") == ("a", "k", "z")


def test_empty_graph():
    g = AdjacencyGraph.empty()
    assert g.ids == () and g.n_edges == 0


# ---------------------------------------------------------------------------
# neighbor excess dose and spillover factor


def test_neighbor_mean_excess_dose_hand_values():
    g = AdjacencyGraph.from_edges([("a", "b"), ("a", "c")])
    doses = {"b": 0.5, "c": -0.5}
    assert neighbor_mean_excess_dose("a", doses, g) == 0.0
    # a missing neighbor contributes zero excess but still counts
    assert neighbor_mean_excess_dose("a", {"b": 0.5}, g) == 0.25
    assert neighbor_mean_excess_dose("a", {"b": 0.5}, g, normalized=False) == 0.5
    # the reference shifts what counts as excess
    assert neighbor_mean_excess_dose("a", doses, g, reference=-0.5) == 0.5
    # isolated unit: no neighborhood at all
    g2 = AdjacencyGraph.from_edges([], nodes=["a"])
    assert neighbor_mean_excess_dose("a", doses, g2) is None


def test_spillover_factor_values():
    params = InterferenceParams(k=5.0, s=1.0)
    assert spillover_factor(1.0, params) == 0.5                  # at midpoint
    want = 1.0 / (1.0 + math.exp(2.5))                           # k(d-s) = -2.5
    assert abs(spillover_factor(0.5, params) - want) < 1e-15
    assert spillover_factor(None, params) == 0.0
    # extreme arguments saturate without overflow
    assert spillover_factor(1e6, params) == 1.0
    assert spillover_factor(-1e6, params) == 0.0


def test_interference_params_validation():
    with pytest.raises(ValueError, match="nonnegative"):
        InterferenceParams(k=-1.0, s=0.0)
    with pytest.raises(ValueError, match="finite"):
        InterferenceParams(k=1.0, s=math.nan)


# ---------------------------------------------------------------------------
# imputation under interference


def test_observed_assignment_reproduces_observed_outcomes():
    h = DoseResponseHypothesis(family="kink", tau=0.5, beta=1.0)
    pairs, outcomes, _ = fixture_table(6, h, h_test=h, seed=0)
    ids = sorted(outcomes)
    g = ring_graph(ids)
    params = InterferenceParams(k=3.0, s=0.2)
    t = impute_under_interference(pairs, outcomes, h, params, g,
                                  assignment=[False] * 6)
    np.testing.assert_array_equal(t.y_lo_obs, [outcomes[p.unit_lo] for p in pairs])
    np.testing.assert_array_equal(t.y_hi_obs, [outcomes[p.unit_hi] for p in pairs])


def test_empty_graph_imputation_equals_plain_table():
    h = DoseResponseHypothesis(family="proportional", beta=0.7)
    pairs, outcomes, plain = fixture_table(5, h, h_test=h, seed=1)
    t = impute_under_interference(pairs, outcomes, h, InterferenceParams(k=5.0, s=0.3),
                                  AdjacencyGraph.empty(), assignment=[False] * 5)
    np.testing.assert_array_equal(t.y_lo_at_hi_dose, plain.y_lo_at_hi_dose)
    np.testing.assert_array_equal(t.y_hi_at_lo_dose, plain.y_hi_at_lo_dose)


def test_impute_rejects_null_family():
    h = DoseResponseHypothesis(family="null")
    pairs, outcomes, _ = fixture_table(4, h, seed=2)
    with pytest.raises(ValueError, match="direct"):
        impute_under_interference(pairs, outcomes, h,
                                  InterferenceParams(k=1.0, s=0.0),
                                  AdjacencyGraph.empty(), assignment=[False] * 4)


def test_assignment_length_must_match():
    h = DoseResponseHypothesis(family="proportional", beta=1.0)
    pairs, outcomes, _ = fixture_table(4, h, seed=3)
    with pytest.raises(ValueError, match="assignment length"):
        impute_under_interference(pairs, outcomes, h,
                                  InterferenceParams(k=1.0, s=0.0),
                                  AdjacencyGraph.empty(), assignment=[False] * 3)


# ---------------------------------------------------------------------------
# the interference test


def test_empty_graph_test_is_bit_identical_to_fixed():
    h = DoseResponseHypothesis(family="kink", tau=1.0, beta=0.5)
    pairs, outcomes, _ = fixture_table(20, h, h_test=h, seed=4)
    params = InterferenceParams(k=5.0, s=0.25)
    for cap, mc in ((1 << 20, 3000), (1, 3000)):
        a = interference_test(pairs, outcomes, h, params, AdjacencyGraph.empty(),
                              mc_draws=mc, seed=7, enumeration_cap=cap)
        b = fixed_test(pairs, outcomes, h, mc_draws=mc, seed=7,
                       enumeration_cap=cap)
        assert a.p_value == b.p_value
        assert a.statistic_observed == b.statistic_observed
        assert a.mode == b.mode


def test_saturated_threshold_disables_spillover_bitwise():
    # with s so large that C underflows to exactly zero, the interference
    # test collapses onto the no-interference test bit for bit
    h = DoseResponseHypothesis(family="kink", tau=0.5, beta=1.0)
    pairs, outcomes, _ = fixture_table(10, h, h_test=h, seed=5)
    g = ring_graph(sorted(outcomes))
    far = InterferenceParams(k=5.0, s=1000.0)
    a = interference_test(pairs, outcomes, h, far, g, seed=0)
    b = fixed_test(pairs, outcomes, h, seed=0)
    assert a.p_value == b.p_value
    assert a.statistic_observed == b.statistic_observed


def test_exact_mode_matches_brute_force_reimputation():
    # independent oracle: enumerate all assignments, re-impute each with
    # impute_under_interference, and apply the plain KS statistic
    h = DoseResponseHypothesis(family="proportional", beta=0.8)
    pairs, outcomes, _ = fixture_table(5, h, h_test=h, seed=6)
    g = ring_graph(sorted(outcomes))
    params = InterferenceParams(k=4.0, s=0.1)
    rep = interference_test(pairs, outcomes, h, params, g)
    assert rep.mode == "exact"

    obs_t = impute_under_interference(pairs, outcomes, h, params, g,
                                      assignment=[False] * 5)
    d_obs = ks_statistic(obs_t.y_lo_obs, obs_t.y_hi_at_lo_dose)
    hits = 0
    for assign in itertools.product([False, True], repeat=5):
        t = impute_under_interference(pairs, outcomes, h, params, g,
                                      assignment=list(assign))
        # group values under this assignment: lo-dose holders vs hi-dose
        # holders transformed to the lo dose
        if ks_statistic(t.y_lo_obs, t.y_hi_at_lo_dose) >= d_obs - 1e-12:
            hits += 1
    assert abs(rep.statistic_observed - d_obs) < 1e-12
    assert abs(rep.p_value - hits / 32.0) < 1e-12


def test_null_family_is_accepted_and_matches_fixed():
    h = DoseResponseHypothesis(family="null")
    pairs, outcomes, _ = fixture_table(12, h, seed=7)
    g = ring_graph(sorted(outcomes))
    a = interference_test(pairs, outcomes, h, InterferenceParams(k=5.0, s=0.25), g,
                          seed=0)
    b = fixed_test(pairs, outcomes, h, seed=0)
    assert a.p_value == b.p_value


def test_relabeling_invariance():
    h = DoseResponseHypothesis(family="kink", tau=0.5, beta=1.2)
    pairs, outcomes, _ = fixture_table(8, h, h_test=h, seed=8)
    g = ring_graph(sorted(outcomes))
    params = InterferenceParams(k=3.0, s=0.5)
    base = interference_test(pairs, outcomes, h, params, g, seed=0)

    ren = {u: f"x_{u}" for u in outcomes}
    pairs2 = [type(p)(ren[p.unit_lo], ren[p.unit_hi], p.distance,
                      p.dose_lo, p.dose_hi) for p in pairs]
    outcomes2 = {ren[u]: y for u, y in outcomes.items()}
    g2 = AdjacencyGraph.from_edges(
        [(ren[a], ren[b]) for a in g.ids for b in g.neighbors(a) if a < b])
    rep2 = interference_test(pairs2, outcomes2, h, params, g2, seed=0)
    assert rep2.p_value == base.p_value
    assert rep2.statistic_observed == base.statistic_observed


def test_normalization_flag_changes_the_computation():
    h = DoseResponseHypothesis(family="proportional", beta=1.0)
    pairs, outcomes, _ = fixture_table(6, h, h_test=h, seed=9)
    ids = sorted(outcomes)
    # a hub with degree > 1 makes mean and sum neighbor doses differ
    g = AdjacencyGraph.from_edges([(ids[0], x) for x in ids[1:]])
    t_mean = impute_under_interference(
        pairs, outcomes, h, InterferenceParams(k=2.0, s=0.5, normalized=True), g,
        assignment=[True] + [False] * 5)
    t_sum = impute_under_interference(
        pairs, outcomes, h, InterferenceParams(k=2.0, s=0.5, normalized=False), g,
        assignment=[True] + [False] * 5)
    mean_cols = np.stack([t_mean.y_lo_obs, t_mean.y_hi_obs,
                          t_mean.y_lo_at_hi_dose, t_mean.y_hi_at_lo_dose])
    sum_cols = np.stack([t_sum.y_lo_obs, t_sum.y_hi_obs,
                         t_sum.y_lo_at_hi_dose, t_sum.y_hi_at_lo_dose])
    assert not np.array_equal(mean_cols, sum_cols)


def test_fixed_doses_for_out_of_sample_neighbors():
    # an out-of-sample node attached to a hi-dose unit shifts that unit's
    # spillover factor, so an extreme fixed dose must move the observed
    # statistic or the p-value
    h = DoseResponseHypothesis(family="proportional", beta=5.0)
    pairs, outcomes, _ = fixture_table(4, h, h_test=h, seed=10)
    g = AdjacencyGraph.from_edges([("outside", pairs[0].unit_hi)])
    lo = interference_test(pairs, outcomes, h, InterferenceParams(k=5.0, s=0.2), g,
                           fixed_doses={"outside": -10.0}, seed=0)
    hi = interference_test(pairs, outcomes, h, InterferenceParams(k=5.0, s=0.2), g,
                           fixed_doses={"outside": 10.0}, seed=0)
    assert lo.statistic_observed != hi.statistic_observed or lo.p_value != hi.p_value
