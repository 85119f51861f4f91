"""Shared builders for the test suite."""

import numpy as np
import pytest

from dosepair.episim import generate_matched_fixture
from dosepair.inference import impute_pair_table
from dosepair.model import DoseResponseHypothesis


def fixture_table(n_pairs, truth, h_test=None, noise_sd=1.0, seed=0):
    """Pre-matched pairs with a known truth, imputed under h_test.

    Returns (pairs, outcomes, table).  h_test defaults to the null model.
    """
    units, pairs = generate_matched_fixture(n_pairs, truth, noise_sd=noise_sd, seed=seed)
    outcomes = {u.id: float(u.outcome) for u in units}
    h = h_test if h_test is not None else DoseResponseHypothesis(family="null")
    return pairs, outcomes, impute_pair_table(pairs, outcomes, h)


@pytest.fixture
def null_hypothesis():
    return DoseResponseHypothesis(family="null")


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(20200301))
