"""Optimal nonbipartite matching: distances, penalties, sinks, extraction.

Builds the design stage: a symmetric distance matrix over units (plus
optional sink nodes that absorb the hardest-to-match units) is solved to
a minimum-total-distance perfect matching, then reduced to dose-ordered
matched pairs.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.spatial.distance import pdist, squareform
from scipy.stats import rankdata

from ._blossom import (MatchingInfeasibleError, _scale_to_int,
                       _solve_from_ints, min_weight_perfect_matching)
from .model import MatchedPair, UnitRecord, units_by_id

__all__ = [
    "DistanceMatrix", "MatchResult", "MatchingInfeasibleError",
    "mahalanobis_distances", "apply_penalties", "add_sinks",
    "optimal_nonbipartite_match", "extract_pairs",
    "write_distance_csv", "read_distance_csv",
    "write_match_csv", "write_match_json",
]

SINK_PREFIX = "__sink_"

# largest node count for which ties are broken by certified lexicographic
# canonicalization (forced-edge re-solves); above this the solver output
# is deterministic but the tie rule is not certified
LEX_CANONICAL_MAX_N = 60


@dataclass(frozen=True)
class DistanceMatrix:
    """Symmetric nonnegative distance matrix with node labels.

    +inf entries mark forbidden edges.  The diagonal is zero.  Sink
    labels start with ``__sink_``.
    """

    labels: tuple
    d: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.d, dtype=float)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "labels", tuple(str(x) for x in self.labels))
        n = len(self.labels)
        if d.shape != (n, n):
            raise ValueError(f"matrix shape {d.shape} does not match {n} labels")
        if len(set(self.labels)) != n:
            raise ValueError("duplicate labels")
        if np.any(np.isnan(d)):
            raise ValueError("NaN distance")
        with np.errstate(invalid="ignore"):
            if np.any(d[np.isfinite(d)] < 0):
                raise ValueError("negative distance")
        if not np.array_equal(d, d.T):
            raise ValueError("distance matrix must be symmetric")
        if np.any(np.diagonal(d) != 0):
            raise ValueError("diagonal must be zero")

    @property
    def n(self) -> int:
        return len(self.labels)

    def is_sink(self, label: str) -> bool:
        return label.startswith(SINK_PREFIX)


@dataclass(frozen=True)
class MatchResult:
    """Unit-unit pairs from the optimal matching plus units sent to sinks."""

    pairs: tuple          # ((label_a, label_b), ...) with label_a < label_b
    total_distance: float
    dropped: tuple        # unit labels matched to sinks


def _covariate_matrix(units: Sequence[UnitRecord]) -> np.ndarray:
    X = np.array([u.covariates for u in units], dtype=float)
    if X.ndim != 2 or X.shape[1] == 0:
        raise ValueError("units carry no covariates")
    return X


def mahalanobis_distances(units: Sequence[UnitRecord],
                          covariance_mode: str = "sample",
                          ridge: bool = False) -> DistanceMatrix:
    """Squared Mahalanobis distances delta_ij = (x_i-x_j)' S^-1 (x_i-x_j).

    covariance_mode:
      sample       S = sample covariance of the covariates
      identity     S = I (squared Euclidean distance)
      rank_robust  covariates replaced columnwise by average ranks, then
                   the sample covariance of the ranks is used
    A singular covariance raises unless ``ridge`` is set, which adds
    lambda * I with lambda = 1e-8 * trace(S) / p.
    """
    if covariance_mode not in ("sample", "identity", "rank_robust"):
        raise ValueError(f"unknown covariance_mode {covariance_mode!r}")
    X = _covariate_matrix(units)
    n, p = X.shape
    if n < 2:
        raise ValueError("need at least two units")
    if covariance_mode == "identity":
        dist = squareform(pdist(X, "sqeuclidean"))
        return DistanceMatrix(labels=tuple(u.id for u in units), d=dist)
    if covariance_mode == "rank_robust":
        X = np.column_stack([rankdata(X[:, j]) for j in range(p)])
    S = np.atleast_2d(np.cov(X, rowvar=False, ddof=1))
    if ridge:
        S = S + (1e-8 * float(np.trace(S)) / p) * np.eye(p)
    eigs = np.linalg.eigvalsh(S)
    if eigs[0] <= eigs[-1] * np.finfo(float).eps * p or eigs[-1] <= 0:
        raise ValueError(
            "singular covariance matrix; drop collinear covariates or pass ridge=True "
            "to add lambda*I with lambda = 1e-8*trace(S)/p")
    VI = np.linalg.inv(S)
    VI = (VI + VI.T) / 2.0
    dist = squareform(pdist(X, "mahalanobis", VI=VI) ** 2)
    dist = (dist + dist.T) / 2.0
    np.fill_diagonal(dist, 0.0)
    return DistanceMatrix(labels=tuple(u.id for u in units), d=dist)


def apply_penalties(dm: DistanceMatrix,
                    exact_keys: Sequence[tuple] | None = None,
                    dose_values: Sequence[float] | None = None,
                    exact_penalty: float = 0.0,
                    dose_gap_penalty: float = 0.0,
                    min_gap: float = 0.0) -> DistanceMatrix:
    """Additive penalties for near-exact constraints and small dose gaps.

    ``exact_keys[i]`` and ``dose_values[i]`` align with ``dm.labels[i]``.
    Pairs whose exact keys differ gain ``exact_penalty``; pairs with
    |dose_i - dose_j| < min_gap gain ``dose_gap_penalty``.  Apply before
    add_sinks so sink edges stay at zero.
    """
    if exact_penalty < 0 or dose_gap_penalty < 0 or min_gap < 0:
        raise ValueError("penalties and min_gap must be nonnegative")
    n = dm.n
    d = dm.d.copy()
    if exact_penalty > 0 and exact_keys is not None:
        if len(exact_keys) != n:
            raise ValueError("exact_keys length does not match matrix")
        keys = [tuple(k) for k in exact_keys]
        differ = np.array([[keys[i] != keys[j] for j in range(n)] for i in range(n)])
        d = d + np.where(differ, exact_penalty, 0.0)
    if dose_gap_penalty > 0 and dose_values is not None:
        if len(dose_values) != n:
            raise ValueError("dose_values length does not match matrix")
        z = np.asarray(dose_values, dtype=float)
        gap = np.abs(z[:, None] - z[None, :])
        d = d + np.where(gap < min_gap, dose_gap_penalty, 0.0)
    np.fill_diagonal(d, 0.0)
    return DistanceMatrix(labels=dm.labels, d=d)


def add_sinks(dm: DistanceMatrix, sink_fraction: float) -> DistanceMatrix:
    """Pad with sink nodes: round(sink_fraction * n) sinks, +1 for parity.

    Sinks connect to every unit at distance 0 and to each other at +inf,
    so a sink absorbs a unit for free and two sinks never pair.
    """
    if sink_fraction < 0 or sink_fraction >= 1:
        raise ValueError("sink_fraction must lie in [0, 1)")
    n = dm.n
    if any(dm.is_sink(x) for x in dm.labels):
        raise ValueError("matrix already contains sinks")
    s = int(math.floor(sink_fraction * n + 0.5))
    if (n + s) % 2 == 1:
        s += 1
    if s == 0:
        return dm
    m = n + s
    d = np.full((m, m), np.inf)
    d[:n, :n] = dm.d
    d[:n, n:] = 0.0
    d[n:, :n] = 0.0
    np.fill_diagonal(d, 0.0)
    labels = dm.labels + tuple(f"{SINK_PREFIX}{k:04d}" for k in range(s))
    return DistanceMatrix(labels=labels, d=d)


def _lex_canonical_pairs(d: np.ndarray, order: np.ndarray,
                         base_pairs: list[tuple[int, int]]) -> list[tuple[int, int]]:
    # greedy forced-edge re-solves: for each node in label order, pin the
    # smallest-labeled partner that preserves the optimal integer total
    n = d.shape[0]
    di, max_i = _scale_to_int(d)
    fin = np.isfinite(d)
    np.fill_diagonal(fin, False)
    total = 0
    partner = {}
    for a, b in base_pairs:
        partner[a] = b
        partner[b] = a
        total += int(di[a, b])
    rank = np.empty(n, dtype=int)
    rank[order] = np.arange(n)
    forced_fin = fin.copy()
    fixed: set[int] = set()
    out: list[tuple[int, int]] = []
    for i in order:
        if i in fixed:
            continue
        cands = [j for j in order if j != i and j not in fixed and fin[i, j]]
        cands.sort(key=lambda j: rank[j])
        chosen = None
        for j in cands:
            if partner.get(i) == j:
                chosen = j  # current optimum already uses the best remaining label
                break
            trial = forced_fin.copy()
            trial[i, :] = False
            trial[:, i] = False
            trial[j, :] = False
            trial[:, j] = False
            trial[i, j] = trial[j, i] = True
            try:
                pairs = _solve_from_ints(di, trial, max_i)
            except MatchingInfeasibleError:
                continue
            t = sum(int(di[a, b]) for a, b in pairs)
            if t == total:
                chosen = j
                partner = {}
                for a, b in pairs:
                    partner[a] = b
                    partner[b] = a
                break
        if chosen is None:
            raise MatchingInfeasibleError("no perfect matching over finite distances")
        fixed.add(i)
        fixed.add(chosen)
        out.append((min(i, chosen), max(i, chosen)))
        forced_fin[i, :] = False
        forced_fin[:, i] = False
        forced_fin[chosen, :] = False
        forced_fin[:, chosen] = False
        forced_fin[i, chosen] = forced_fin[chosen, i] = True
    out.sort()
    return out


def optimal_nonbipartite_match(dm: DistanceMatrix) -> MatchResult:
    """Minimum-total-distance perfect matching of the distance matrix.

    Ties among optimal matchings are broken toward the lexicographically
    smallest sorted pair list (certified by forced-edge re-solves up to
    LEX_CANONICAL_MAX_N nodes; deterministic beyond).  Raises
    MatchingInfeasibleError when no perfect matching over finite
    distances exists.
    """
    n = dm.n
    if n == 0:
        raise ValueError("empty distance matrix")
    if n % 2 == 1:
        raise MatchingInfeasibleError(
            "odd number of nodes; add sinks to restore parity")
    idx_pairs = min_weight_perfect_matching(dm.d)
    if n <= LEX_CANONICAL_MAX_N:
        order = np.array(sorted(range(n), key=lambda i: dm.labels[i]), dtype=int)
        idx_pairs = _lex_canonical_pairs(dm.d, order, idx_pairs)
    total = 0.0
    pairs = []
    dropped = []
    for a, b in idx_pairs:
        la, lb = dm.labels[a], dm.labels[b]
        sa, sb = dm.is_sink(la), dm.is_sink(lb)
        total += float(dm.d[a, b])
        if sa and sb:  # cannot happen: sink-sink edges are +inf
            continue
        if sa or sb:
            dropped.append(lb if sa else la)
        else:
            pairs.append((min(la, lb), max(la, lb)))
    pairs.sort()
    dropped.sort()
    return MatchResult(pairs=tuple(pairs), total_distance=total, dropped=tuple(dropped))


def extract_pairs(result: MatchResult,
                  units: Sequence[UnitRecord] | Mapping[str, UnitRecord],
                  dm: DistanceMatrix | None = None) -> list[MatchedPair]:
    """Dose-ordered MatchedPair objects for the unit-unit pairs.

    The lower-dose unit becomes unit_lo; dose ties order by unit id.
    Distances are read from ``dm`` when given, else set to 0.
    """
    if not isinstance(units, Mapping):
        units = units_by_id(units)
    index = {lab: k for k, lab in enumerate(dm.labels)} if dm is not None else {}
    out = []
    for a, b in result.pairs:
        ua, ub = units[a], units[b]
        if ua.dose is None or ub.dose is None:
            raise ValueError(f"units {a!r}, {b!r} need scalar doses; reduce trajectories first")
        dist = float(dm.d[index[a], index[b]]) if dm is not None else 0.0
        if (ua.dose, ua.id) <= (ub.dose, ub.id):
            lo, hi = ua, ub
        else:
            lo, hi = ub, ua
        out.append(MatchedPair(unit_lo=lo.id, unit_hi=hi.id, distance=dist,
                               dose_lo=float(lo.dose), dose_hi=float(hi.dose)))
    return out


def write_distance_csv(dm: DistanceMatrix, path: str) -> None:
    """CSV with a header row of labels and a symmetric body (inf allowed)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(dm.labels)
        for row in dm.d:
            w.writerow([repr(float(x)) for x in row])


def read_distance_csv(path: str) -> DistanceMatrix:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty distance file")
    labels = tuple(rows[0])
    body = np.array([[float(x) for x in row] for row in rows[1:]], dtype=float)
    return DistanceMatrix(labels=labels, d=body)


def write_match_csv(pairs: Sequence[MatchedPair], path: str) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["unit_lo", "unit_hi", "distance"])
        for p in pairs:
            w.writerow([p.unit_lo, p.unit_hi, repr(float(p.distance))])


def write_match_json(result: MatchResult, pairs: Sequence[MatchedPair], path: str) -> None:
    payload = {
        "total_distance": result.total_distance,
        "dropped": list(result.dropped),
        "pairs": [
            {"unit_lo": p.unit_lo, "unit_hi": p.unit_hi, "distance": p.distance,
             "dose_lo": p.dose_lo, "dose_hi": p.dose_hi}
            for p in pairs
        ],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
