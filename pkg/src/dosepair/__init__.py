"""Matched-pair designs for continuous and time-varying doses.

Embeds an observational dose panel into an approximate randomized
experiment by optimal nonbipartite matching, then tests structured
dose-response hypotheses by re-randomizing within pairs.  Companion
modules cover trajectory reduction (cumulative dose, aggregate
outcomes), spillover-aware tests on an adjacency graph, biased-coin
sensitivity analysis, a known-truth epidemic simulator, and county
panel CSV input.
"""

__version__ = "0.1.0"

from .model import (BalanceRow, DoseResponseHypothesis, MatchedPair,
                    UnitRecord, ValidationReport, evaluate_model,
                    standardized_differences, validate_dataset)
from .matching import (DistanceMatrix, MatchResult, MatchingInfeasibleError,
                       add_sinks, apply_penalties, extract_pairs,
                       mahalanobis_distances, optimal_nonbipartite_match)
from .inference import (CompositeReport, ImputedPairTable, ModelSpec,
                        PValueSurface, TestReport, composite_test,
                        impute_pair_table, ks_statistic, pvalue_surface,
                        randomization_p_value, sequential_model_scan,
                        test_fixed)
from .longitudinal import (AggregateOutcomeSpec, CumulativeDoseSpec,
                           aggregate_outcome, cumulative_dose,
                           reduce_to_static, w_equivalent)
from .interference import (AdjacencyGraph, InterferenceParams,
                           impute_under_interference,
                           neighbor_mean_excess_dose, spillover_factor,
                           test_interference)
from .sensitivity import (GammaModel, SensitivityCurve, biased_p_value,
                          sensitivity_curve)
from .episim import (SirConfig, SirResult, WEquivalenceAudit,
                     audit_w_equivalence, generate_matched_fixture,
                     simulate_sir)
from .dataio import (COVARIATE_SCHEMA, CountyPanel, CountyRecord,
                     load_adjacency, load_panel, to_unit_records,
                     weekly_outcome_covariates)

__all__ = [
    "__version__",
    # model
    "UnitRecord", "MatchedPair", "DoseResponseHypothesis", "BalanceRow",
    "ValidationReport", "evaluate_model", "validate_dataset",
    "standardized_differences",
    # matching
    "DistanceMatrix", "MatchResult", "MatchingInfeasibleError",
    "mahalanobis_distances", "apply_penalties", "add_sinks",
    "optimal_nonbipartite_match", "extract_pairs",
    # inference
    "ImputedPairTable", "TestReport", "PValueSurface", "CompositeReport",
    "ModelSpec", "impute_pair_table", "ks_statistic",
    "randomization_p_value", "test_fixed", "pvalue_surface",
    "composite_test", "sequential_model_scan",
    # longitudinal
    "CumulativeDoseSpec", "AggregateOutcomeSpec", "cumulative_dose",
    "w_equivalent", "aggregate_outcome", "reduce_to_static",
    # interference
    "AdjacencyGraph", "InterferenceParams", "neighbor_mean_excess_dose",
    "spillover_factor", "impute_under_interference", "test_interference",
    # sensitivity
    "GammaModel", "SensitivityCurve", "biased_p_value", "sensitivity_curve",
    # episim
    "SirConfig", "SirResult", "WEquivalenceAudit", "simulate_sir",
    "audit_w_equivalence", "generate_matched_fixture",
    # dataio
    "COVARIATE_SCHEMA", "CountyPanel", "CountyRecord", "load_panel",
    "weekly_outcome_covariates", "load_adjacency", "to_unit_records",
]
