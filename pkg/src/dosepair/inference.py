"""Randomization tests of structured dose-response hypotheses on matched pairs.

The observed pair table is completed under a hypothesized dose-response
model f (science-table imputation on the link scale), then the
within-pair dose assignment is re-randomized.  The default discrepancy
is a two-sample Kolmogorov-Smirnov statistic between the lo-dose group
and the hi-dose group transformed to the lo dose; under the hypothesis
both groups estimate the same distribution.

Monte Carlo draws come from a counter-based generator (Philox) keyed by
the seed and consumed in fixed-size batches, so every engine that walks
the same (seed, n_pairs) stream sees bit-identical flips regardless of
how many draws the caller asks for per call.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterator, Mapping, Sequence

import numpy as np

from .model import (DoseResponseHypothesis, MatchedPair, evaluate_model_array)

__all__ = [
    "ImputedPairTable", "TestReport", "PValueSurface", "CompositeReport",
    "ModelSpec", "impute_pair_table", "ks_statistic", "randomization_p_value",
    "test_fixed", "pvalue_surface", "composite_test", "prescreen_theta_box",
    "sequential_model_scan", "DEFAULT_ENUMERATION_CAP",
]

DEFAULT_ENUMERATION_CAP = 1 << 16

# Monte Carlo flips are generated in fixed blocks of this many draws so
# that the random stream position after k draws never depends on the
# caller's total; reproducibility then needs only (seed, n_pairs).
_FLIP_BATCH = 1 << 14


@dataclass(frozen=True)
class ImputedPairTable:
    """Science table of one matched-pair experiment on the link scale.

    Columns are aligned arrays over pairs i = 1..I:
      y_lo_obs         observed outcome of the lo-dose unit
      y_hi_obs         observed outcome of the hi-dose unit
      y_lo_at_hi_dose  lo unit's outcome imputed at the hi dose
      y_hi_at_lo_dose  hi unit's outcome imputed at the lo dose
      dose_lo, dose_hi the within-pair doses
    """

    y_lo_obs: np.ndarray
    y_hi_obs: np.ndarray
    y_lo_at_hi_dose: np.ndarray
    y_hi_at_lo_dose: np.ndarray
    dose_lo: np.ndarray
    dose_hi: np.ndarray

    def __post_init__(self):
        for name in ("y_lo_obs", "y_hi_obs", "y_lo_at_hi_dose",
                     "y_hi_at_lo_dose", "dose_lo", "dose_hi"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        I = self.y_lo_obs.size
        if I == 0:
            raise ValueError("empty pair table")
        for name in ("y_hi_obs", "y_lo_at_hi_dose", "y_hi_at_lo_dose",
                     "dose_lo", "dose_hi"):
            if getattr(self, name).size != I:
                raise ValueError(f"column {name} has length {getattr(self, name).size}, expected {I}")

    @property
    def n_pairs(self) -> int:
        return int(self.y_lo_obs.size)


@dataclass(frozen=True)
class TestReport:
    statistic_observed: float
    p_value: float
    mc_draws: int                 # enumerated configurations when mode == "exact"
    mode: str                     # "exact" | "monte_carlo"
    seed: int
    model: DoseResponseHypothesis | None = None


@dataclass(frozen=True)
class PValueSurface:
    tau_grid: np.ndarray
    beta_grid: np.ndarray
    p: np.ndarray                 # shape (len(tau_grid), len(beta_grid))
    argmax: tuple                 # (tau, beta) of the first maximizer, row-major
    p_max: float
    mode: str
    mc_draws: int
    seed: int


@dataclass(frozen=True)
class CompositeReport:
    """Composite test over a box of model parameters: reject iff p_max + gamma <= alpha."""

    family: str
    points: tuple                 # ((tau, beta), ...)
    p_values: np.ndarray
    p_max: float
    theta_at_max: tuple
    alpha: float
    gamma: float
    reject: bool
    mode: str                     # "bounded_box" | "berger_boos"
    mc_mode: str                  # "exact" | "monte_carlo"
    mc_draws: int
    seed: int
    label: str = ""


@dataclass(frozen=True)
class ModelSpec:
    """One entry of a sequential scan: a labeled family with its parameter box."""

    label: str
    family: str
    theta_box: object             # grid dict or explicit point list (see composite_test)
    gamma: float = 0.0


def link_transform(y: np.ndarray, link: str, log_offset: float,
                   unit_ids: Sequence[str] | None = None) -> np.ndarray:
    """Map outcomes to the link scale; log link requires y + offset > 0."""
    y = np.asarray(y, dtype=float)
    if link == "identity":
        return y
    if link != "log":
        raise ValueError(f"unknown link {link!r}")
    shifted = y + log_offset
    if np.any(shifted <= 0):
        bad = int(np.argmax(shifted <= 0))
        uid = unit_ids[bad] if unit_ids is not None else f"index {bad}"
        raise ValueError(
            f"log link needs outcome + offset > 0; violated by unit {uid} "
            f"(outcome {y[bad]}, offset {log_offset})")
    return np.log(shifted)


def _pair_arrays(pairs: Sequence[MatchedPair],
                 outcomes: Mapping[str, float]):
    if not pairs:
        raise ValueError("no matched pairs")
    ylo = np.array([outcomes[p.unit_lo] for p in pairs], dtype=float)
    yhi = np.array([outcomes[p.unit_hi] for p in pairs], dtype=float)
    dlo = np.array([p.dose_lo for p in pairs], dtype=float)
    dhi = np.array([p.dose_hi for p in pairs], dtype=float)
    return ylo, yhi, dlo, dhi


def impute_pair_table(pairs: Sequence[MatchedPair],
                      outcomes: Mapping[str, float],
                      h: DoseResponseHypothesis) -> ImputedPairTable:
    """Complete the science table under f: shift outcomes along the model.

    On the link scale, y_lo_at_hi_dose = y_lo + (f(hi) - f(lo)) and
    y_hi_at_lo_dose = y_hi - (f(hi) - f(lo)).
    """
    ylo, yhi, dlo, dhi = _pair_arrays(pairs, outcomes)
    ylo = link_transform(ylo, h.link, h.log_offset, [p.unit_lo for p in pairs])
    yhi = link_transform(yhi, h.link, h.log_offset, [p.unit_hi for p in pairs])
    df = evaluate_model_array(h, dhi) - evaluate_model_array(h, dlo)
    return ImputedPairTable(
        y_lo_obs=ylo, y_hi_obs=yhi,
        y_lo_at_hi_dose=ylo + df, y_hi_at_lo_dose=yhi - df,
        dose_lo=dlo, dose_hi=dhi)


# ---------------------------------------------------------------------------
# KS engine: integer-exact sup |F_lo - F_hi| over pooled tie groups


def _pool(a: np.ndarray, b: np.ndarray):
    I = a.size
    pooled = np.concatenate([a, b])
    order = np.argsort(pooled, kind="stable")
    svals = pooled[order]
    tie_end = np.empty(2 * I, dtype=bool)
    tie_end[:-1] = svals[:-1] != svals[1:]
    tie_end[-1] = True
    base = np.where(order < I, np.int64(1), np.int64(-1))
    pair_of = np.where(order < I, order, order - I)
    return base, pair_of, np.nonzero(tie_end)[0]


def _ks_int_observed(a: np.ndarray, b: np.ndarray) -> int:
    base, _, tie_idx = _pool(a, b)
    cums = np.cumsum(base)
    return int(np.max(np.abs(cums[tie_idx])))


def _ks_int_draws(base, pair_of, tie_idx, flips: np.ndarray) -> np.ndarray:
    # flips: (draws, I) bool; group sign of each pooled slot negates when
    # its pair flips
    sign = np.int64(1) - np.int64(2) * flips[:, pair_of]
    contrib = sign * base[None, :]
    cums = np.cumsum(contrib, axis=1)
    return np.max(np.abs(cums[:, tie_idx]), axis=1)


def ks_statistic(y_lo: np.ndarray, y_hi_at_lo: np.ndarray) -> float:
    """sup_y |F_lo(y) - F_hi_transformed(y)|, evaluated at tie-group ends.

    Equals the classical two-sample KS statistic of the two arrays; lies
    in [0, 1].
    """
    a = np.asarray(y_lo, dtype=float)
    b = np.asarray(y_hi_at_lo, dtype=float)
    if a.size != b.size or a.size == 0:
        raise ValueError("need two equal-length nonempty arrays")
    return _ks_int_observed(a, b) / a.size


# ---------------------------------------------------------------------------
# Reference distribution: exact enumeration or Monte Carlo over pair flips


def _flip_batches(seed: int, mc_draws: int, I: int,
                  flip_prob: np.ndarray | float) -> Iterator[np.ndarray]:
    """Bool flip matrices in fixed _FLIP_BATCH blocks from Philox(seed)."""
    rng = np.random.Generator(np.random.Philox(seed))
    done = 0
    while done < mc_draws:
        m = min(_FLIP_BATCH, mc_draws - done)
        u = rng.random((m, I))
        yield u < flip_prob
        done += m


def _enumerate_flips(I: int) -> np.ndarray:
    ids = np.arange(1 << I, dtype=np.uint64)
    return ((ids[:, None] >> np.arange(I, dtype=np.uint64)) & 1).astype(bool)


def _exact_weights(flips: np.ndarray, flip_prob: np.ndarray | float) -> np.ndarray:
    I = flips.shape[1]
    fp = np.broadcast_to(np.asarray(flip_prob, dtype=float), (I,))
    return np.prod(np.where(flips, fp, 1.0 - fp), axis=1)


def randomization_p_value(table: ImputedPairTable,
                          statistic_fn: Callable | None = None,
                          mc_draws: int = 100_000,
                          seed: int = 0,
                          enumeration_cap: int = DEFAULT_ENUMERATION_CAP,
                          flip_probs: np.ndarray | float | None = None,
                          model: DoseResponseHypothesis | None = None) -> TestReport:
    """P(statistic >= observed) under independent within-pair flips.

    Exact enumeration of all 2^I assignments when 2^I <= enumeration_cap
    (the observed configuration is one of them), else plain-proportion
    Monte Carlo with ``mc_draws`` draws.  ``flip_probs`` gives each
    pair's probability of swapping roles (default 1/2; the biased values
    come from sensitivity analysis).  ``statistic_fn(y_lo, y_hi_at_lo)``
    replaces the default KS discrepancy; larger must mean less
    compatible.
    """
    a = table.y_lo_obs
    b = table.y_hi_at_lo_dose
    I = table.n_pairs
    if mc_draws < 1:
        raise ValueError("mc_draws must be positive")
    fp = 0.5 if flip_probs is None else np.asarray(flip_probs, dtype=float)
    if np.any(np.asarray(fp) < 0) or np.any(np.asarray(fp) > 1):
        raise ValueError("flip probabilities must lie in [0, 1]")
    exact = I < 63 and (1 << I) <= enumeration_cap

    if statistic_fn is None:
        base, pair_of, tie_idx = _pool(a, b)
        d_obs = _ks_int_observed(a, b)
        stat_obs = d_obs / I
        if exact:
            flips = _enumerate_flips(I)
            D = _ks_int_draws(base, pair_of, tie_idx, flips)
            w = _exact_weights(flips, fp)
            p = float(np.sum(w[D >= d_obs]))
            return TestReport(stat_obs, p, 1 << I, "exact", seed, model)
        hits = 0
        for flips in _flip_batches(seed, mc_draws, I, fp):
            D = _ks_int_draws(base, pair_of, tie_idx, flips)
            hits += int(np.count_nonzero(D >= d_obs))
        return TestReport(stat_obs, hits / mc_draws, mc_draws, "monte_carlo", seed, model)

    stat_obs = float(statistic_fn(a, b))
    if exact:
        flips = _enumerate_flips(I)
        w = _exact_weights(flips, fp)
        p = 0.0
        for k in range(flips.shape[0]):
            f = flips[k]
            s = float(statistic_fn(np.where(f, b, a), np.where(f, a, b)))
            if s >= stat_obs:
                p += float(w[k])
        return TestReport(stat_obs, p, 1 << I, "exact", seed, model)
    hits = 0
    for flips in _flip_batches(seed, mc_draws, I, fp):
        for f in flips:
            s = float(statistic_fn(np.where(f, b, a), np.where(f, a, b)))
            if s >= stat_obs:
                hits += 1
    return TestReport(stat_obs, hits / mc_draws, mc_draws, "monte_carlo", seed, model)


def test_fixed(pairs: Sequence[MatchedPair],
               outcomes: Mapping[str, float],
               h: DoseResponseHypothesis,
               mc_draws: int = 100_000,
               seed: int = 0,
               enumeration_cap: int = DEFAULT_ENUMERATION_CAP,
               statistic_fn: Callable | None = None) -> TestReport:
    """Impute the science table under h and test it by re-randomization."""
    table = impute_pair_table(pairs, outcomes, h)
    return randomization_p_value(table, statistic_fn=statistic_fn,
                                 mc_draws=mc_draws, seed=seed,
                                 enumeration_cap=enumeration_cap, model=h)


def _make_hypothesis(family: str, tau: float, beta: float,
                     reference_dose: float, link: str,
                     log_offset: float) -> DoseResponseHypothesis:
    if family in ("kink", "kink_log"):
        return DoseResponseHypothesis(family=family, tau=float(tau), beta=float(beta),
                                      reference_dose=reference_dose, link=link,
                                      log_offset=log_offset)
    return DoseResponseHypothesis(family=family, beta=float(beta),
                                  reference_dose=reference_dose, link=link,
                                  log_offset=log_offset)


def _p_over_points(pairs, outcomes, family, points, mc_draws, seed,
                   reference_dose, link, log_offset, enumeration_cap):
    """P-values at each (tau, beta), sharing one flip stream across points.

    Each point's p-value is bit-identical to a standalone test_fixed call
    with the same seed: the flips depend only on (seed, n_pairs) and the
    KS decision is integer-exact.
    """
    if link is None:
        link = "log" if family == "kink_log" else "identity"
    ylo_raw, yhi_raw, dlo, dhi = _pair_arrays(pairs, outcomes)
    ylo = link_transform(ylo_raw, link, log_offset, [p.unit_lo for p in pairs])
    yhi = link_transform(yhi_raw, link, log_offset, [p.unit_hi for p in pairs])
    I = len(pairs)
    exact = I < 63 and (1 << I) <= enumeration_cap

    hypotheses = [_make_hypothesis(family, t, bta, reference_dose, link, log_offset)
                  for (t, bta) in points]
    tables = []
    for h in hypotheses:
        df = evaluate_model_array(h, dhi) - evaluate_model_array(h, dlo)
        tables.append((ylo, yhi - df))

    pvals = np.empty(len(points), dtype=float)
    stat_obs = np.empty(len(points), dtype=float)
    pooled = [(_pool(A, B), _ks_int_observed(A, B)) for (A, B) in tables]
    for k, ((base, pair_of, tie_idx), d_obs) in enumerate(pooled):
        stat_obs[k] = d_obs / I

    if exact:
        flips = _enumerate_flips(I)
        w = _exact_weights(flips, 0.5)
        for k, ((base, pair_of, tie_idx), d_obs) in enumerate(pooled):
            D = _ks_int_draws(base, pair_of, tie_idx, flips)
            pvals[k] = float(np.sum(w[D >= d_obs]))
        return pvals, stat_obs, "exact", 1 << I

    hits = np.zeros(len(points), dtype=np.int64)
    for flips in _flip_batches(seed, mc_draws, I, 0.5):
        for k, ((base, pair_of, tie_idx), d_obs) in enumerate(pooled):
            D = _ks_int_draws(base, pair_of, tie_idx, flips)
            hits[k] += int(np.count_nonzero(D >= d_obs))
    pvals[:] = hits / mc_draws
    return pvals, stat_obs, "monte_carlo", mc_draws


def pvalue_surface(pairs: Sequence[MatchedPair],
                   outcomes: Mapping[str, float],
                   family: str,
                   tau_grid: Sequence[float],
                   beta_grid: Sequence[float],
                   mc_draws: int = 100_000,
                   seed: int = 0,
                   reference_dose: float = 0.0,
                   link: str | None = None,
                   log_offset: float = 1.0,
                   enumeration_cap: int = DEFAULT_ENUMERATION_CAP) -> PValueSurface:
    """P-value over a (tau, beta) grid; every cell shares the seed.

    A degenerate 1x1 grid reproduces test_fixed exactly; a cell with
    tau = +inf carries the null-model p-value.
    """
    tau_grid = np.asarray(tau_grid, dtype=float)
    beta_grid = np.asarray(beta_grid, dtype=float)
    if tau_grid.size == 0 or beta_grid.size == 0:
        raise ValueError("empty grid")
    points = [(t, bta) for t in tau_grid for bta in beta_grid]
    pvals, _, mode, eff_draws = _p_over_points(
        pairs, outcomes, family, points, mc_draws, seed,
        reference_dose, link, log_offset, enumeration_cap)
    P = pvals.reshape(tau_grid.size, beta_grid.size)
    flat = int(np.argmax(P))
    it, ib = np.unravel_index(flat, P.shape)
    return PValueSurface(tau_grid=tau_grid, beta_grid=beta_grid, p=P,
                         argmax=(float(tau_grid[it]), float(beta_grid[ib])),
                         p_max=float(P[it, ib]), mode=mode,
                         mc_draws=eff_draws, seed=seed)


def _box_points(family: str, theta_box) -> list[tuple]:
    if isinstance(theta_box, Mapping):
        taus = list(theta_box.get("tau_grid", [0.0]))
        betas = list(theta_box.get("beta_grid", [0.0]))
        pts = [(float(t), float(b)) for t in taus for b in betas]
    else:
        pts = [(float(t), float(b)) for (t, b) in theta_box]
    return pts


def composite_test(pairs: Sequence[MatchedPair],
                   outcomes: Mapping[str, float],
                   family: str,
                   theta_box,
                   gamma: float = 0.0,
                   alpha: float = 0.05,
                   mc_draws: int = 100_000,
                   seed: int = 0,
                   reference_dose: float = 0.0,
                   link: str | None = None,
                   log_offset: float = 1.0,
                   enumeration_cap: int = DEFAULT_ENUMERATION_CAP,
                   label: str = "") -> CompositeReport:
    """Test a whole model family over a parameter box: reject iff p_max + gamma <= alpha.

    gamma = 0 is the bounded-box rule (valid when the box covers the
    plausible parameters); gamma > 0 spends a Berger-Boos allowance for
    searching an unbounded space through a confidence box.
    """
    if not (0 <= gamma < alpha):
        raise ValueError("need 0 <= gamma < alpha")
    points = _box_points(family, theta_box)
    if not points:
        raise ValueError("empty theta box")
    pvals, _, mc_mode, eff_draws = _p_over_points(
        pairs, outcomes, family, points, mc_draws, seed,
        reference_dose, link, log_offset, enumeration_cap)
    k = int(np.argmax(pvals))
    p_max = float(pvals[k])
    return CompositeReport(
        family=family, points=tuple(points), p_values=pvals, p_max=p_max,
        theta_at_max=points[k], alpha=alpha, gamma=gamma,
        reject=bool(p_max + gamma <= alpha),
        mode="berger_boos" if gamma > 0 else "bounded_box",
        mc_mode=mc_mode, mc_draws=eff_draws, seed=seed, label=label)


def prescreen_theta_box(pairs: Sequence[MatchedPair],
                        outcomes: Mapping[str, float],
                        family: str,
                        theta_box,
                        screen_draws: int = 500,
                        seed: int = 0,
                        margin: float = 0.2,
                        reference_dose: float = 0.0,
                        link: str | None = None,
                        log_offset: float = 1.0) -> list[tuple]:
    """HEURISTIC pre-screen: drop points that cannot plausibly carry p_max.

    Evaluates a cheap low-draw p-value at every point and keeps those
    within ``margin`` of the screening maximum.  This is a speedup aid
    only; it carries no validity guarantee, so confirmatory analyses
    should run composite_test on the full box.
    """
    points = _box_points(family, theta_box)
    if not points:
        raise ValueError("empty theta box")
    pvals, _, _, _ = _p_over_points(
        pairs, outcomes, family, points, screen_draws, seed,
        reference_dose, link, log_offset, enumeration_cap=1)
    keep = pvals >= max(float(np.max(pvals)) - margin, 0.0)
    return [pt for pt, k in zip(points, keep) if k]


def sequential_model_scan(pairs: Sequence[MatchedPair],
                          outcomes: Mapping[str, float],
                          models: Sequence[ModelSpec],
                          alpha: float = 0.05,
                          mc_draws: int = 100_000,
                          seed: int = 0,
                          reference_dose: float = 0.0,
                          log_offset: float = 1.0,
                          enumeration_cap: int = DEFAULT_ENUMERATION_CAP) -> list[CompositeReport]:
    """Scan models in the given order; stop at the first non-rejected one.

    Returns the reports computed up to and including the stopping model.
    If every model is rejected the returned list covers them all and each
    report carries reject=True ("all rejected").  The scan applies no
    multiplicity correction: it reports the first adequate working model
    in a fixed walk order rather than a simultaneous confidence set.
    """
    if not models:
        raise ValueError("no models to scan")
    reports: list[CompositeReport] = []
    for spec in models:
        rep = composite_test(pairs, outcomes, spec.family, spec.theta_box,
                             gamma=spec.gamma, alpha=alpha, mc_draws=mc_draws,
                             seed=seed, reference_dose=reference_dose,
                             log_offset=log_offset,
                             enumeration_cap=enumeration_cap, label=spec.label)
        reports.append(rep)
        if not rep.reject:
            break
    return reports
