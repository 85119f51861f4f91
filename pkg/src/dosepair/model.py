"""Domain types shared across modules, dataset validation, and balance.

All types are immutable value objects; operations are pure functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

FAMILIES = ("null", "proportional", "kink", "kink_log")
LINKS = ("identity", "log")


@dataclass(frozen=True)
class UnitRecord:
    """One study unit.

    Exactly one of (dose, dose_trajectory) and one of
    (outcome, outcome_trajectory) must be set.  Covariates are positional
    with an optional shared name schema.
    """

    id: str
    covariates: np.ndarray = field(default_factory=lambda: np.zeros(0))
    exact_match_keys: tuple = ()
    dose: float | None = None
    dose_trajectory: np.ndarray | None = None
    outcome: float | None = None
    outcome_trajectory: np.ndarray | None = None
    covariate_names: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "covariates", np.asarray(self.covariates, dtype=float))
        if self.dose_trajectory is not None:
            object.__setattr__(self, "dose_trajectory",
                               np.asarray(self.dose_trajectory, dtype=float))
        if self.outcome_trajectory is not None:
            object.__setattr__(self, "outcome_trajectory",
                               np.asarray(self.outcome_trajectory, dtype=float))


@dataclass(frozen=True)
class MatchedPair:
    """Two unit ids ordered by dose: unit_lo holds the smaller dose."""

    unit_lo: str
    unit_hi: str
    distance: float
    dose_lo: float
    dose_hi: float

    def __post_init__(self):
        if self.unit_lo == self.unit_hi:
            raise ValueError(f"pair must contain two distinct units, got {self.unit_lo!r} twice")
        if self.dose_lo > self.dose_hi:
            raise ValueError(f"dose_lo {self.dose_lo} exceeds dose_hi {self.dose_hi}")
        if self.distance < 0:
            raise ValueError("distance must be nonnegative")


@dataclass(frozen=True)
class DoseResponseHypothesis:
    """Parametric dose-response model f(z; z*, theta) on a link scale.

    Families:
      null          f == 0
      proportional  f(z) = beta * (z - reference_dose)
      kink          f(z) = 0 for z <= tau, beta * (z - tau) for z > tau
      kink_log      the kink form interpreted as a shift on the log scale
                    of the outcome (link forced to "log")

    For the kink families the reference dose must sit at or below tau so
    that f(reference_dose) = 0 holds.
    """

    family: str
    tau: float = 0.0
    beta: float = 0.0
    reference_dose: float = 0.0
    link: str = "identity"
    log_offset: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if self.family == "kink_log":
            object.__setattr__(self, "link", "log")
        if self.link not in LINKS:
            raise ValueError(f"unknown link {self.link!r}; expected one of {LINKS}")
        if self.log_offset < 0:
            raise ValueError("log_offset must be nonnegative")
        if self.family in ("kink", "kink_log"):
            if math.isnan(self.tau):
                raise ValueError("tau must not be NaN")
            if self.reference_dose > self.tau:
                raise ValueError(
                    f"reference_dose {self.reference_dose} must not exceed tau {self.tau}; "
                    "the kink form is flat only at or below the threshold")


def evaluate_model(h: DoseResponseHypothesis, z: float) -> float:
    """f(z; z*, theta) on the link scale.  Total function, no errors."""
    if h.family == "null":
        return 0.0
    if h.family == "proportional":
        return h.beta * (z - h.reference_dose)
    # kink, kink_log
    if z <= h.tau:
        return 0.0
    return h.beta * (z - h.tau)


def evaluate_model_array(h: DoseResponseHypothesis, z: np.ndarray) -> np.ndarray:
    """Vectorized evaluate_model with identical per-element arithmetic."""
    z = np.asarray(z, dtype=float)
    if h.family == "null":
        return np.zeros_like(z)
    if h.family == "proportional":
        return h.beta * (z - h.reference_dose)
    out = np.zeros_like(z)
    above = z > h.tau
    out[above] = h.beta * (z[above] - h.tau)
    return out


@dataclass(frozen=True)
class BalanceRow:
    covariate: str
    mean_lo: float
    mean_hi: float
    standardized_difference: float


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple

    @property
    def ok(self) -> bool:
        return len(self.violations) == 0


def validate_dataset(units: Sequence[UnitRecord]) -> ValidationReport:
    """Schema validation: lengths, NaNs, duplicate ids, dose/outcome shape."""
    if not units:
        raise ValueError("empty dataset")
    violations: list[str] = []
    seen: set[str] = set()
    cov_len = len(units[0].covariates)
    dose_traj_len = None
    out_traj_len = None
    for u in units:
        if u.id in seen:
            violations.append(f"duplicate id {u.id!r}")
        seen.add(u.id)
        if len(u.covariates) != cov_len:
            violations.append(
                f"covariate length mismatch for {u.id!r}: {len(u.covariates)} != {cov_len}")
        if np.any(~np.isfinite(u.covariates)):
            violations.append(f"non-finite covariate for {u.id!r}")
        has_dose = u.dose is not None
        has_dtraj = u.dose_trajectory is not None
        if has_dose == has_dtraj:
            violations.append(f"unit {u.id!r} must set exactly one of dose/dose_trajectory")
        if has_dose and not math.isfinite(u.dose):
            violations.append(f"non-finite dose for {u.id!r}")
        if has_dtraj:
            if dose_traj_len is None:
                dose_traj_len = len(u.dose_trajectory)
            elif len(u.dose_trajectory) != dose_traj_len:
                violations.append(
                    f"dose trajectory length mismatch for {u.id!r}: "
                    f"{len(u.dose_trajectory)} != {dose_traj_len}")
            if np.any(~np.isfinite(u.dose_trajectory)):
                violations.append(f"non-finite dose trajectory for {u.id!r}")
        has_out = u.outcome is not None
        has_otraj = u.outcome_trajectory is not None
        if has_out == has_otraj:
            violations.append(f"unit {u.id!r} must set exactly one of outcome/outcome_trajectory")
        if has_out and not math.isfinite(u.outcome):
            violations.append(f"non-finite outcome for {u.id!r}")
        if has_otraj:
            if out_traj_len is None:
                out_traj_len = len(u.outcome_trajectory)
            elif len(u.outcome_trajectory) != out_traj_len:
                violations.append(
                    f"outcome trajectory length mismatch for {u.id!r}: "
                    f"{len(u.outcome_trajectory)} != {out_traj_len}")
            if np.any(~np.isfinite(u.outcome_trajectory)):
                violations.append(f"non-finite outcome trajectory for {u.id!r}")
    return ValidationReport(violations=tuple(violations))


def units_by_id(units: Sequence[UnitRecord]) -> Mapping[str, UnitRecord]:
    out = {u.id: u for u in units}
    if len(out) != len(units):
        raise ValueError("duplicate unit ids")
    return out


def standardized_differences(pairs: Sequence[MatchedPair],
                             units: Sequence[UnitRecord] | Mapping[str, UnitRecord],
                             ) -> list[BalanceRow]:
    """Covariate balance between the lo-dose and hi-dose groups.

    standardized_difference = (mean_hi - mean_lo) / sqrt((s2_lo + s2_hi)/2)
    with unbiased group variances.  Zero mean difference reports 0 even
    when the pooled SD is 0; a nonzero difference over a zero pooled SD
    reports a signed infinity.
    """
    if not isinstance(units, Mapping):
        units = units_by_id(units)
    for p in pairs:
        if p.unit_lo not in units or p.unit_hi not in units:
            raise KeyError(f"pair ({p.unit_lo!r}, {p.unit_hi!r}) has an unresolved unit id")
    lo = np.array([units[p.unit_lo].covariates for p in pairs], dtype=float)
    hi = np.array([units[p.unit_hi].covariates for p in pairs], dtype=float)
    if lo.size == 0:
        return []
    names = units[pairs[0].unit_lo].covariate_names
    if names is None:
        names = tuple(f"x{i}" for i in range(lo.shape[1]))
    rows = []
    for j in range(lo.shape[1]):
        m_lo = float(np.mean(lo[:, j]))
        m_hi = float(np.mean(hi[:, j]))
        v_lo = float(np.var(lo[:, j], ddof=1)) if lo.shape[0] > 1 else 0.0
        v_hi = float(np.var(hi[:, j], ddof=1)) if hi.shape[0] > 1 else 0.0
        psd = math.sqrt((v_lo + v_hi) / 2.0)
        diff = m_hi - m_lo
        if diff == 0.0:
            sd = 0.0
        elif psd == 0.0:
            sd = math.copysign(math.inf, diff)
        else:
            sd = diff / psd
        rows.append(BalanceRow(covariate=str(names[j]), mean_lo=m_lo, mean_hi=m_hi,
                               standardized_difference=sd))
    return rows
