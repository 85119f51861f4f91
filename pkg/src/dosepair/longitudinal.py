"""Reduction of dose/outcome trajectories to scalar summaries.

A weighted cumulative dose collapses a dose trajectory relative to a
reference trajectory; an aggregate outcome collapses the post-window
outcome trajectory.  Units whose trajectories share the same cumulative
dose are exchangeable for the downstream tests, so equality up to a
relative tolerance (W-equivalence) is the matching currency.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from decimal import Decimal
from typing import Sequence

import numpy as np

from .model import UnitRecord

__all__ = ["CumulativeDoseSpec", "AggregateOutcomeSpec", "cumulative_dose",
           "w_equivalent", "aggregate_outcome", "reduce_to_static"]


@dataclass(frozen=True)
class CumulativeDoseSpec:
    """Weights and reference for the cumulative dose over a day window.

    ``lag`` trailing days of the window get weight zero (doses there are
    assumed unable to affect the aggregate outcome); the remaining
    weights are normalized to sum to one at construction.
    """

    reference_trajectory: np.ndarray
    weights: np.ndarray
    lag: int = 0

    def __post_init__(self):
        ref = np.asarray(self.reference_trajectory, dtype=float)
        w = np.asarray(self.weights, dtype=float).copy()
        if ref.ndim != 1 or w.shape != ref.shape:
            raise ValueError(
                f"weights shape {w.shape} must match reference shape {ref.shape}")
        if not (isinstance(self.lag, (int, np.integer)) and 0 <= self.lag <= ref.size):
            raise ValueError(f"lag must be an integer in [0, {ref.size}]")
        if np.any(~np.isfinite(w)) or np.any(w < 0):
            raise ValueError("weights must be finite and nonnegative")
        if np.any(~np.isfinite(ref)):
            raise ValueError("reference trajectory must be finite")
        if self.lag > 0:
            w[ref.size - self.lag:] = 0.0
        total = float(np.sum(w))
        if total <= 0:
            raise ValueError("weights sum to zero after zeroing the lag window")
        w = w / total
        object.__setattr__(self, "reference_trajectory", ref)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "lag", int(self.lag))

    @property
    def window_length(self) -> int:
        return int(self.reference_trajectory.size)


@dataclass(frozen=True)
class AggregateOutcomeSpec:
    """Sum of the outcome trajectory over the closed index window [start, end]."""

    start: int
    end: int
    aggregator: str = "sum"

    def __post_init__(self):
        if self.aggregator != "sum":
            raise ValueError(f"unknown aggregator {self.aggregator!r}")
        if not (0 <= self.start <= self.end):
            raise ValueError(f"need 0 <= start <= end, got [{self.start}, {self.end}]")

    @property
    def length(self) -> int:
        return self.end - self.start + 1


def cumulative_dose(dose_trajectory: Sequence[float], spec: CumulativeDoseSpec) -> float:
    """Weighted mean excess dose sum_t w(t) (z(t) - z*(t)).

    Accumulated in decimal arithmetic on the shortest decimal
    representations of the inputs, as the ratio
    (sum w(t) (z(t)-z*(t))) / (sum w(t)), then rounded once to float.
    The ratio form keeps decimally-exact inputs decimally exact even
    though the stored normalized weights sum to 1 only up to float
    rounding: uniform weights over (-0.3, -0.4, -0.5) against a flat
    -0.5 reference give exactly 0.1.
    """
    z = np.asarray(dose_trajectory, dtype=float)
    if z.shape != spec.reference_trajectory.shape:
        raise ValueError(
            f"trajectory length {z.size} does not match window length {spec.window_length}")
    if np.any(~np.isfinite(z)):
        raise ValueError("dose trajectory must be finite")
    num = Decimal(0)
    den = Decimal(0)
    ref = spec.reference_trajectory
    for t in range(z.size):
        wt = float(spec.weights[t])
        if wt == 0.0:
            continue
        wd = Decimal(repr(wt))
        num += wd * (Decimal(repr(float(z[t]))) - Decimal(repr(float(ref[t]))))
        den += wd
    return float(num / den)


def w_equivalent(traj_a: Sequence[float], traj_b: Sequence[float],
                 spec: CumulativeDoseSpec, rel_tol: float = 1e-12) -> bool:
    """Whether two trajectories share the cumulative dose.

    The tolerance is relative to the larger excess-dose magnitude, so
    the answer does not change under a common rescaling of both
    trajectories about the reference.
    """
    cd_a = cumulative_dose(traj_a, spec)
    cd_b = cumulative_dose(traj_b, spec)
    ref = spec.reference_trajectory
    scale = max(float(np.max(np.abs(np.asarray(traj_a, dtype=float) - ref), initial=0.0)),
                float(np.max(np.abs(np.asarray(traj_b, dtype=float) - ref), initial=0.0)))
    return abs(cd_a - cd_b) <= rel_tol * scale


def aggregate_outcome(outcome_trajectory: Sequence[float],
                      spec: AggregateOutcomeSpec) -> float:
    y = np.asarray(outcome_trajectory, dtype=float)
    if spec.end >= y.size:
        raise ValueError(
            f"aggregation window [{spec.start}, {spec.end}] falls outside the "
            f"trajectory of length {y.size}")
    return float(np.sum(y[spec.start:spec.end + 1]))


def reduce_to_static(units: Sequence[UnitRecord],
                     cd_spec: CumulativeDoseSpec,
                     agg_spec: AggregateOutcomeSpec) -> list[UnitRecord]:
    """Collapse trajectory units to scalar (cumulative dose, aggregate outcome).

    Covariates, ids and exact keys pass through unchanged, so downstream
    matching and testing behave exactly as on natively scalar data.  With
    a positive lag the aggregation window must span exactly ``lag`` days
    (the days whose outcomes the zero-weighted doses cannot reach).
    """
    if cd_spec.lag > 0 and agg_spec.length != cd_spec.lag:
        raise ValueError(
            f"aggregation window length {agg_spec.length} must equal lag {cd_spec.lag}")
    out = []
    for u in units:
        if u.dose_trajectory is None:
            raise ValueError(f"unit {u.id!r} has no dose trajectory")
        if u.outcome_trajectory is None:
            raise ValueError(f"unit {u.id!r} has no outcome trajectory")
        cd = cumulative_dose(u.dose_trajectory, cd_spec)
        ag = aggregate_outcome(u.outcome_trajectory, agg_spec)
        out.append(replace(u, dose=cd, dose_trajectory=None,
                           outcome=ag, outcome_trajectory=None))
    return out
