"""County panel CSV loading, weekly covariate construction, writers.

File formats (see docs/formats.md for the exact byte-level contract):

  covariates.csv  fips,name,<13 time-independent covariates>
  mobility.csv    fips,<ISO dates>   signed relative mobility, daily
  cases.csv       fips,<ISO dates>   daily new case counts
  deaths.csv      fips,<ISO dates>   daily new death counts
  adjacency.csv   fips_a,fips_b      undirected county border edges

Counts are converted to per-100k rates at load (raw counts retained);
counties missing from any file are dropped from the joined panel and
reported.  All parse errors name the file and line.
"""

from __future__ import annotations

import csv
import datetime
import warnings
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .interference import AdjacencyGraph
from .model import UnitRecord

__all__ = ["COVARIATE_SCHEMA", "CountyRecord", "CountyPanel", "load_panel",
           "weekly_outcome_covariates", "load_adjacency", "to_unit_records",
           "write_panel_csvs", "write_adjacency_csv"]

# versioned header schema of covariates.csv (order is the contract)
COVARIATE_SCHEMA = (
    "population",
    "population_density",
    "median_age",
    "pct_over_65",
    "median_household_income",
    "poverty_rate",
    "unemployment_rate",
    "pct_black",
    "pct_hispanic",
    "pct_college",
    "urban_fraction",
    "mean_household_size",
    "baseline_mobility",
)


@dataclass(frozen=True)
class CountyRecord:
    fips: str
    name: str
    covariates: np.ndarray          # aligned with COVARIATE_SCHEMA
    dates_mobility: tuple
    mobility: np.ndarray
    dates_outcome: tuple            # shared by cases and deaths
    cases_raw: np.ndarray
    deaths_raw: np.ndarray
    cases_per100k: np.ndarray
    deaths_per100k: np.ndarray

    @property
    def population(self) -> float:
        return float(self.covariates[COVARIATE_SCHEMA.index("population")])


@dataclass(frozen=True)
class CountyPanel:
    counties: tuple                 # CountyRecord, sorted by fips
    dropped: tuple                  # (fips, reason)

    def __post_init__(self):
        object.__setattr__(self, "_by_fips", {c.fips: c for c in self.counties})

    def county(self, fips: str) -> CountyRecord:
        return self._by_fips[fips]

    @property
    def fips(self) -> tuple:
        return tuple(c.fips for c in self.counties)


def _parse_float(text: str, path: str, line: int, col: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise ValueError(f"{path}:{line}: column {col!r}: not a number: {text!r}") from None
    if not np.isfinite(v):
        raise ValueError(f"{path}:{line}: column {col!r}: non-finite value {text!r}")
    return v


def _parse_date(text: str, path: str, line: int) -> datetime.date:
    try:
        return datetime.date.fromisoformat(text)
    except ValueError:
        raise ValueError(f"{path}:{line}: malformed ISO date {text!r} in header") from None


def _read_rows(path: str) -> list[list[str]]:
    try:
        with open(path, newline="") as fh:
            return list(csv.reader(fh))
    except OSError as e:
        raise ValueError(f"{path}: cannot read: {e}") from None


def _read_covariates(path: str):
    rows = _read_rows(path)
    if not rows:
        raise ValueError(f"{path}:1: empty file")
    expected = ["fips", "name", *COVARIATE_SCHEMA]
    if rows[0] != expected:
        raise ValueError(
            f"{path}:1: header mismatch; expected {','.join(expected)}")
    out: dict[str, tuple] = {}
    for k, row in enumerate(rows[1:], start=2):
        if len(row) != len(expected):
            raise ValueError(f"{path}:{k}: expected {len(expected)} fields, got {len(row)}")
        fips = row[0]
        if fips in out:
            raise ValueError(f"{path}:{k}: duplicate fips {fips!r}")
        vals = np.array([_parse_float(v, path, k, c)
                         for v, c in zip(row[2:], COVARIATE_SCHEMA)])
        out[fips] = (row[1], vals)
    return out


def _read_series(path: str):
    rows = _read_rows(path)
    if not rows:
        raise ValueError(f"{path}:1: empty file")
    head = rows[0]
    if not head or head[0] != "fips":
        raise ValueError(f"{path}:1: first header field must be 'fips'")
    dates = [_parse_date(t, path, 1) for t in head[1:]]
    if not dates:
        raise ValueError(f"{path}:1: no date columns")
    for a, b in zip(dates, dates[1:]):
        if (b - a).days != 1:
            raise ValueError(f"{path}:1: dates must be consecutive days; gap at {b}")
    out: dict[str, np.ndarray] = {}
    for k, row in enumerate(rows[1:], start=2):
        if len(row) != len(head):
            raise ValueError(f"{path}:{k}: expected {len(head)} fields, got {len(row)}")
        fips = row[0]
        if fips in out:
            raise ValueError(f"{path}:{k}: duplicate fips {fips!r}")
        out[fips] = np.array([_parse_float(v, path, k, d.isoformat())
                              for v, d in zip(row[1:], dates)])
    return tuple(d.isoformat() for d in dates), out


def load_panel(covariates_csv: str, mobility_csv: str,
               cases_csv: str, deaths_csv: str) -> CountyPanel:
    """Inner-join the four files on fips; report dropped counties.

    Cases and deaths must share a date grid; mobility may cover a
    different window.  Case and death counts are converted to per-100k
    rates using the population covariate (raw counts retained).
    """
    cov = _read_covariates(covariates_csv)
    mob_dates, mob = _read_series(mobility_csv)
    case_dates, cases = _read_series(cases_csv)
    death_dates, deaths = _read_series(deaths_csv)
    if case_dates != death_dates:
        raise ValueError(
            f"{deaths_csv}:1: death dates must match case dates in {cases_csv}")
    sources = [(covariates_csv, cov), (mobility_csv, mob),
               (cases_csv, cases), (deaths_csv, deaths)]
    union: set[str] = set()
    for _, table in sources:
        union |= set(table)
    common = set.intersection(*(set(t) for _, t in sources))
    dropped = []
    for fips in sorted(union - common):
        missing = [p for p, t in sources if fips not in t]
        dropped.append((fips, "missing from " + ", ".join(missing)))
    counties = []
    pop_idx = COVARIATE_SCHEMA.index("population")
    for fips in sorted(common):
        name, values = cov[fips]
        pop = float(values[pop_idx])
        if pop <= 0:
            raise ValueError(
                f"{covariates_csv}: county {fips}: population must be positive "
                f"for per-100k rates, got {pop}")
        scale = 1e5 / pop
        counties.append(CountyRecord(
            fips=fips, name=name, covariates=values,
            dates_mobility=mob_dates, mobility=mob[fips],
            dates_outcome=case_dates,
            cases_raw=cases[fips], deaths_raw=deaths[fips],
            cases_per100k=cases[fips] * scale,
            deaths_per100k=deaths[fips] * scale))
    return CountyPanel(counties=tuple(counties), dropped=tuple(dropped))


def weekly_outcome_covariates(county: CountyRecord,
                              week_boundaries: Sequence[tuple]) -> np.ndarray:
    """Per-week case then death sums per 100k, as a matching covariate block.

    ``week_boundaries`` lists closed (monday, sunday) ISO date pairs
    inside the outcome date range.  The output order is all case-weeks
    in the given order followed by all death-weeks in the same order, so
    W weeks produce a length-2W vector.
    """
    dates = [datetime.date.fromisoformat(d) for d in county.dates_outcome]
    index = {d: k for k, d in enumerate(dates)}
    case_block = []
    death_block = []
    for w, (start_s, end_s) in enumerate(week_boundaries):
        start = datetime.date.fromisoformat(str(start_s))
        end = datetime.date.fromisoformat(str(end_s))
        if start.weekday() != 0 or end.weekday() != 6 or (end - start).days != 6:
            raise ValueError(
                f"week {w}: ({start}, {end}) is not a closed monday-sunday week")
        if start not in index or end not in index:
            raise ValueError(
                f"week {w}: ({start}, {end}) falls outside the outcome date range "
                f"[{dates[0]}, {dates[-1]}]")
        a, b = index[start], index[end]
        case_block.append(float(np.sum(county.cases_per100k[a:b + 1])))
        death_block.append(float(np.sum(county.deaths_per100k[a:b + 1])))
    return np.array(case_block + death_block)


def load_adjacency(path: str, known_fips: Sequence[str] | None = None) -> AdjacencyGraph:
    """Undirected border graph from fips_a,fips_b rows.

    Duplicate edges collapse; self loops are dropped with a warning;
    edges naming fips outside ``known_fips`` are kept with a warning
    (out-of-sample neighbors still matter for spillover).
    """
    rows = _read_rows(path)
    if not rows or rows[0] != ["fips_a", "fips_b"]:
        raise ValueError(f"{path}:1: header must be fips_a,fips_b")
    edges = []
    known = set(known_fips) if known_fips is not None else None
    for k, row in enumerate(rows[1:], start=2):
        if len(row) != 2:
            raise ValueError(f"{path}:{k}: expected 2 fields, got {len(row)}")
        a, b = row
        if a == b:
            warnings.warn(f"{path}:{k}: self loop at {a!r} dropped")
            continue
        if known is not None:
            for x in (a, b):
                if x not in known:
                    warnings.warn(f"{path}:{k}: unknown fips {x!r} kept as out-of-sample node")
        edges.append((a, b))
    nodes = known_fips if known_fips is not None else ()
    return AdjacencyGraph.from_edges(edges, nodes=nodes)


def to_unit_records(panel: CountyPanel,
                    outcome: str = "deaths",
                    weekly_weeks: Sequence[tuple] | None = None,
                    exact_key_covariates: Sequence[str] = ()) -> list[UnitRecord]:
    """UnitRecords with mobility dose trajectories and per-100k outcomes.

    ``outcome`` picks cases or deaths (per 100k).  ``weekly_weeks``
    appends weekly_outcome_covariates to each unit's covariate vector.
    ``exact_key_covariates`` names covariates copied into
    exact_match_keys (values compared exactly).
    """
    if outcome not in ("cases", "deaths"):
        raise ValueError(f"outcome must be 'cases' or 'deaths', got {outcome!r}")
    units = []
    for c in panel.counties:
        cov = c.covariates
        names = list(COVARIATE_SCHEMA)
        if weekly_weeks is not None:
            wk = weekly_outcome_covariates(c, weekly_weeks)
            cov = np.concatenate([cov, wk])
            names += [f"cases_week_{k}" for k in range(len(weekly_weeks))]
            names += [f"deaths_week_{k}" for k in range(len(weekly_weeks))]
        keys = tuple(float(cov[names.index(k)]) for k in exact_key_covariates)
        traj = c.deaths_per100k if outcome == "deaths" else c.cases_per100k
        units.append(UnitRecord(
            id=c.fips, covariates=cov, exact_match_keys=keys,
            dose_trajectory=c.mobility, outcome_trajectory=traj,
            covariate_names=tuple(names)))
    return units


def _fmt(x: float) -> str:
    v = float(x)
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def write_panel_csvs(path_covariates: str, path_mobility: str,
                     path_cases: str, path_deaths: str,
                     fips: Sequence[str], names: Mapping[str, str],
                     covariates: Mapping[str, np.ndarray],
                     mobility_dates: Sequence[str], mobility: Mapping[str, np.ndarray],
                     outcome_dates: Sequence[str],
                     cases: Mapping[str, np.ndarray],
                     deaths: Mapping[str, np.ndarray]) -> None:
    """Deterministic writers for the four panel files (sorted fips, repr floats)."""
    order = sorted(fips)
    with open(path_covariates, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["fips", "name", *COVARIATE_SCHEMA])
        for f in order:
            w.writerow([f, names[f], *(_fmt(v) for v in covariates[f])])
    for path, dates, table in ((path_mobility, mobility_dates, mobility),
                               (path_cases, outcome_dates, cases),
                               (path_deaths, outcome_dates, deaths)):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["fips", *dates])
            for f in order:
                w.writerow([f, *(_fmt(v) for v in table[f])])


def write_adjacency_csv(path: str, edges: Sequence[tuple]) -> None:
    dedup = sorted({(min(a, b), max(a, b)) for a, b in edges if a != b})
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["fips_a", "fips_b"])
        for a, b in dedup:
            w.writerow([a, b])
