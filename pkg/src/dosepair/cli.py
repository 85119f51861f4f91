"""Command-line pipeline: match, test, simulate.

One JSON config file drives every subcommand; outputs land in --out as
CSV/JSON plus a manifest.json recording SHA-256 hashes of the config,
the input files, and every output file.  Nothing in the outputs depends
on wall clock, filesystem layout, or thread count, so reruns with the
same config are byte-identical and manifest hashes can be compared
directly.

Exit codes: 0 success, 2 data validation failure, 3 infeasible
matching, 4 malformed config.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import os
import sys
from typing import Mapping, Sequence

import numpy as np

from . import __version__
from .dataio import (CountyPanel, load_adjacency, load_panel, to_unit_records,
                     write_adjacency_csv, write_panel_csvs)
from .episim import (SirConfig, audit_w_equivalence, generate_matched_fixture,
                     simulate_sir)
from .inference import (ModelSpec, composite_test, impute_pair_table,
                        pvalue_surface, sequential_model_scan, test_fixed)
from .interference import InterferenceParams, test_interference
from .longitudinal import (AggregateOutcomeSpec, CumulativeDoseSpec,
                           reduce_to_static)
from .matching import (MatchingInfeasibleError, add_sinks, apply_penalties,
                       extract_pairs, mahalanobis_distances,
                       optimal_nonbipartite_match, write_match_csv,
                       write_match_json)
from .model import (DoseResponseHypothesis, MatchedPair, UnitRecord,
                    standardized_differences, units_by_id, validate_dataset)
from .sensitivity import sensitivity_curve

__all__ = ["main", "ConfigError"]


class ConfigError(ValueError):
    """Malformed or incomplete configuration (exit code 4)."""


def _need(cfg: Mapping, key: str, where: str):
    if key not in cfg:
        raise ConfigError(f"config section {where!r} is missing key {key!r}")
    return cfg[key]


def _grid(spec, where: str) -> np.ndarray:
    if isinstance(spec, Mapping):
        start = float(_need(spec, "start", where))
        stop = float(_need(spec, "stop", where))
        step = float(_need(spec, "step", where))
        if step <= 0:
            raise ConfigError(f"{where}: step must be positive")
        n = int(np.floor((stop - start) / step + 1e-9)) + 1
        return start + step * np.arange(n)
    try:
        vals = np.asarray([float(x) for x in spec], dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: expected a number list or start/stop/step") from None
    if vals.size == 0:
        raise ConfigError(f"{where}: empty grid")
    return vals


def _hypothesis(spec: Mapping, where: str) -> DoseResponseHypothesis:
    if not isinstance(spec, Mapping):
        raise ConfigError(f"{where}: model must be an object")
    try:
        return DoseResponseHypothesis(
            family=_need(spec, "family", where),
            tau=float(spec.get("tau", 0.0)),
            beta=float(spec.get("beta", 0.0)),
            reference_dose=float(spec.get("reference_dose", 0.0)),
            link=spec.get("link", "identity"),
            log_offset=float(spec.get("log_offset", 1.0)))
    except ValueError as e:
        raise ConfigError(f"{where}: {e}") from None


def _jsonable(x):
    if dataclasses.is_dataclass(x) and not isinstance(x, type):
        return {f.name: _jsonable(getattr(x, f.name)) for f in dataclasses.fields(x)}
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    if isinstance(x, float) and (np.isnan(x) or np.isinf(x)):
        return repr(x)
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, Mapping):
        return {str(k): _jsonable(v) for k, v in x.items()}
    return x


def _write_json(path: str, payload) -> None:
    with open(path, "w") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out_dir: str, command: str, config_path: str,
                    cfg: Mapping, input_paths: Sequence[str],
                    output_names: Sequence[str]) -> None:
    manifest = {
        "command": command,
        "package_version": __version__,
        "config_sha256": _sha256(config_path),
        "seed": cfg.get("inference", {}).get("seed", cfg.get("simulate", {}).get("seed")),
        "params": cfg,
        "inputs": {p: _sha256(p) for p in sorted(set(input_paths))},
        "outputs": {n: _sha256(os.path.join(out_dir, n)) for n in sorted(output_names)},
    }
    _write_json(os.path.join(out_dir, "manifest.json"), manifest)


# ---------------------------------------------------------------------------
# shared pipeline: panel -> static units


def _date_slice(dates: Sequence[str], window, where: str) -> tuple[int, int]:
    if (not isinstance(window, (list, tuple))) or len(window) != 2:
        raise ConfigError(f"{where}: expected [start_date, end_date]")
    a, b = str(window[0]), str(window[1])
    if a not in dates or b not in dates:
        raise ConfigError(
            f"{where}: window [{a}, {b}] not covered by dates "
            f"[{dates[0]}, {dates[-1]}]")
    ia, ib = dates.index(a), dates.index(b)
    if ia > ib:
        raise ConfigError(f"{where}: start date after end date")
    return ia, ib


def _load_static_units(cfg: Mapping):
    data = _need(cfg, "data", "config")
    design = _need(cfg, "design", "config")
    paths = [_need(data, k, "data") for k in
             ("covariates_csv", "mobility_csv", "cases_csv", "deaths_csv")]
    panel = load_panel(*paths)
    weeks = data.get("weekly_covariate_weeks")
    units = to_unit_records(panel, outcome=data.get("outcome", "deaths"),
                            weekly_weeks=weeks,
                            exact_key_covariates=data.get("exact_key_covariates", ()))

    mob_dates = panel.counties[0].dates_mobility if panel.counties else ()
    out_dates = panel.counties[0].dates_outcome if panel.counties else ()
    d0, d1 = _date_slice(list(mob_dates), _need(data, "dose_window", "data"),
                         "data.dose_window")
    o0, o1 = _date_slice(list(out_dates), _need(data, "outcome_window", "data"),
                         "data.outcome_window")
    win = d1 - d0 + 1
    ref_spec = design.get("reference_dose", 0.0)
    if isinstance(ref_spec, (list, tuple)):
        reference = np.asarray([float(x) for x in ref_spec])
        if reference.size != win:
            raise ConfigError(
                f"design.reference_dose: trajectory length {reference.size} != "
                f"dose window length {win}")
    else:
        reference = np.full(win, float(ref_spec))
    w_spec = design.get("weights", "uniform")
    weights = np.ones(win) if w_spec == "uniform" else np.asarray(
        [float(x) for x in w_spec])
    try:
        cd_spec = CumulativeDoseSpec(reference_trajectory=reference,
                                     weights=weights,
                                     lag=int(design.get("lag", 0)))
        agg_spec = AggregateOutcomeSpec(start=o0, end=o1)
    except ValueError as e:
        raise ConfigError(f"design: {e}") from None

    sliced = [dataclasses.replace(u, dose_trajectory=u.dose_trajectory[d0:d1 + 1])
              for u in units]
    report = validate_dataset(sliced)
    if not report.ok:
        raise ValueError("dataset validation failed:\n  " + "\n  ".join(report.violations))
    static = reduce_to_static(sliced, cd_spec, agg_spec)
    return panel, sliced, static, cd_spec, agg_spec, paths


def _build_distance(static, design):
    try:
        dm = mahalanobis_distances(static,
                                   covariance_mode=design.get("covariance_mode", "sample"),
                                   ridge=bool(design.get("ridge", False)))
        dm = apply_penalties(
            dm,
            exact_keys=[u.exact_match_keys for u in static],
            dose_values=[u.dose for u in static],
            exact_penalty=float(design.get("exact_penalty", 0.0)),
            dose_gap_penalty=float(design.get("dose_gap_penalty", 0.0)),
            min_gap=float(design.get("min_gap", 0.0)))
        return add_sinks(dm, float(design.get("sink_fraction", 0.0)))
    except ValueError as e:
        raise ValueError(f"distance construction failed: {e}") from None


def _write_balance_csv(path: str, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["covariate", "mean_lo", "mean_hi", "standardized_difference"])
        for r in rows:
            w.writerow([r.covariate, repr(r.mean_lo), repr(r.mean_hi),
                        repr(r.standardized_difference)])


def _cmd_match(cfg: Mapping, config_path: str, out_dir: str) -> int:
    panel, _, static, cd_spec, _, paths = _load_static_units(cfg)
    design = _need(cfg, "design", "config")
    dm = _build_distance(static, design)
    result = optimal_nonbipartite_match(dm)
    pairs = extract_pairs(result, static, dm)
    balance = standardized_differences(pairs, static)

    write_match_csv(pairs, os.path.join(out_dir, "pairs.csv"))
    write_match_json(result, pairs, os.path.join(out_dir, "match.json"))
    _write_balance_csv(os.path.join(out_dir, "balance.csv"), balance)
    with open(os.path.join(out_dir, "dropped.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["unit", "reason"])
        for uid in result.dropped:
            w.writerow([uid, "matched to sink"])
        for fips, reason in panel.dropped:
            w.writerow([fips, reason])
    outputs = ["pairs.csv", "match.json", "balance.csv", "dropped.csv"]
    _write_manifest(out_dir, "match", config_path, cfg, paths + [config_path], outputs)
    return 0


def _read_pairs_csv(path: str, static_by_id: Mapping[str, UnitRecord]) -> list[MatchedPair]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["unit_lo", "unit_hi", "distance"]:
        raise ValueError(f"{path}:1: header must be unit_lo,unit_hi,distance")
    pairs = []
    for k, row in enumerate(rows[1:], start=2):
        if len(row) != 3:
            raise ValueError(f"{path}:{k}: expected 3 fields")
        a, b, dist = row
        for x in (a, b):
            if x not in static_by_id:
                raise ValueError(f"{path}:{k}: unknown unit {x!r}")
        ua, ub = static_by_id[a], static_by_id[b]
        lo, hi = (ua, ub) if (ua.dose, ua.id) <= (ub.dose, ub.id) else (ub, ua)
        pairs.append(MatchedPair(unit_lo=lo.id, unit_hi=hi.id, distance=float(dist),
                                 dose_lo=float(lo.dose), dose_hi=float(hi.dose)))
    if not pairs:
        raise ValueError(f"{path}: no pairs")
    return pairs


def _apply_subgroup(pairs, static_by_id, sub, where: str):
    name = _need(sub, "covariate", where)
    op = _need(sub, "op", where)
    value = float(_need(sub, "value", where))
    ops = {
        ">=": lambda x: x >= value, "<=": lambda x: x <= value,
        ">": lambda x: x > value, "<": lambda x: x < value,
        "==": lambda x: x == value, "!=": lambda x: x != value,
    }
    if op not in ops:
        raise ConfigError(f"{where}: unknown op {op!r}")

    def val(uid: str) -> float:
        u = static_by_id[uid]
        if u.covariate_names is None or name not in u.covariate_names:
            raise ConfigError(f"{where}: unknown covariate {name!r}")
        return float(u.covariates[u.covariate_names.index(name)])

    kept = [p for p in pairs if ops[op](val(p.unit_lo)) and ops[op](val(p.unit_hi))]
    if not kept:
        raise ValueError(f"subgroup filter {name} {op} {value} keeps no pairs")
    return kept


def _cmd_test(cfg: Mapping, config_path: str, out_dir: str) -> int:
    panel, sliced, static, cd_spec, _, paths = _load_static_units(cfg)
    inf = _need(cfg, "inference", "config")
    pairs_csv = _need(inf, "pairs_csv", "inference")
    static_by_id = units_by_id(static)
    pairs = _read_pairs_csv(pairs_csv, static_by_id)
    if "subgroup" in inf and inf["subgroup"] is not None:
        pairs = _apply_subgroup(pairs, static_by_id, inf["subgroup"], "inference.subgroup")
    outcomes = {u.id: float(u.outcome) for u in static}
    seed = int(inf.get("seed", 0))
    mc_draws = int(inf.get("mc_draws", 100_000))
    cap = int(inf.get("enumeration_cap", 1 << 16))
    alpha = float(inf.get("alpha", 0.05))
    mode = _need(inf, "mode", "inference")
    outputs = []
    inputs = paths + [config_path, pairs_csv]

    if mode == "fixed":
        rep = test_fixed(pairs, outcomes, _hypothesis(_need(inf, "model", "inference"),
                                                      "inference.model"),
                         mc_draws=mc_draws, seed=seed, enumeration_cap=cap)
        _write_json(os.path.join(out_dir, "report.json"), rep)
        outputs.append("report.json")

    elif mode == "surface":
        family = _need(inf, "family", "inference")
        surf = pvalue_surface(pairs, outcomes, family,
                              _grid(_need(inf, "tau_grid", "inference"), "inference.tau_grid"),
                              _grid(_need(inf, "beta_grid", "inference"), "inference.beta_grid"),
                              mc_draws=mc_draws, seed=seed,
                              reference_dose=float(inf.get("model_reference_dose", 0.0)),
                              log_offset=float(inf.get("log_offset", 1.0)),
                              enumeration_cap=cap)
        with open(os.path.join(out_dir, "surface.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["tau", "beta", "p"])
            for i, t in enumerate(surf.tau_grid):
                for j, b in enumerate(surf.beta_grid):
                    w.writerow([repr(float(t)), repr(float(b)), repr(float(surf.p[i, j]))])
        _write_json(os.path.join(out_dir, "report.json"),
                    {"mode": surf.mode, "mc_draws": surf.mc_draws, "seed": surf.seed,
                     "p_max": surf.p_max, "argmax_tau": surf.argmax[0],
                     "argmax_beta": surf.argmax[1]})
        outputs += ["surface.csv", "report.json"]

    elif mode == "composite":
        family = _need(inf, "family", "inference")
        box = {"tau_grid": _grid(_need(inf, "tau_grid", "inference"), "inference.tau_grid"),
               "beta_grid": _grid(_need(inf, "beta_grid", "inference"), "inference.beta_grid")}
        try:
            rep = composite_test(pairs, outcomes, family, box,
                                 gamma=float(inf.get("gamma", 0.0)), alpha=alpha,
                                 mc_draws=mc_draws, seed=seed,
                                 reference_dose=float(inf.get("model_reference_dose", 0.0)),
                                 log_offset=float(inf.get("log_offset", 1.0)),
                                 enumeration_cap=cap)
        except ValueError as e:
            raise ConfigError(f"inference: {e}") from None
        _write_json(os.path.join(out_dir, "report.json"), rep)
        outputs.append("report.json")

    elif mode == "scan":
        specs = []
        for k, m in enumerate(_need(inf, "models", "inference")):
            where = f"inference.models[{k}]"
            box = {"tau_grid": _grid(m.get("tau_grid", [0.0]), where),
                   "beta_grid": _grid(m.get("beta_grid", [0.0]), where)}
            specs.append(ModelSpec(label=str(m.get("label", f"model_{k}")),
                                   family=_need(m, "family", where),
                                   theta_box=box, gamma=float(m.get("gamma", 0.0))))
        reports = sequential_model_scan(pairs, outcomes, specs, alpha=alpha,
                                        mc_draws=mc_draws, seed=seed,
                                        enumeration_cap=cap)
        selected = None if reports[-1].reject else reports[-1].label
        _write_json(os.path.join(out_dir, "report.json"),
                    {"selected": selected if selected is not None else "all rejected",
                     "reports": reports})
        outputs.append("report.json")

    elif mode == "interference":
        data = _need(cfg, "data", "config")
        icfg = _need(cfg, "interference", "config")
        graph = load_adjacency(_need(data, "adjacency_csv", "data"),
                               known_fips=panel.fips)
        inputs.append(data["adjacency_csv"])
        h = _hypothesis(_need(inf, "model", "inference"), "inference.model")
        matched_ids = {p.unit_lo for p in pairs} | {p.unit_hi for p in pairs}
        fixed = {u.id: float(u.dose) for u in static if u.id not in matched_ids}
        normalized = bool(icfg.get("normalized", True))
        k_grid = _grid(icfg["k_grid"], "interference.k_grid") if "k_grid" in icfg \
            else np.asarray([float(_need(icfg, "k", "interference"))])
        s_grid = _grid(icfg["s_grid"], "interference.s_grid") if "s_grid" in icfg \
            else np.asarray([float(_need(icfg, "s", "interference"))])
        rows = []
        for kk in k_grid:
            for ss in s_grid:
                params = InterferenceParams(k=float(kk), s=float(ss),
                                            normalized=normalized)
                rep = test_interference(pairs, outcomes, h, params, graph,
                                        mc_draws=mc_draws, seed=seed,
                                        fixed_doses=fixed, enumeration_cap=cap)
                rows.append((float(kk), float(ss), rep))
        with open(os.path.join(out_dir, "interference_sweep.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "s", "p", "statistic"])
            for kk, ss, rep in rows:
                w.writerow([repr(kk), repr(ss), repr(rep.p_value),
                            repr(rep.statistic_observed)])
        _write_json(os.path.join(out_dir, "report.json"),
                    [{"k": kk, "s": ss, "report": rep} for kk, ss, rep in rows])
        outputs += ["interference_sweep.csv", "report.json"]

    elif mode == "sensitivity":
        scfg = _need(cfg, "sensitivity", "config")
        h = _hypothesis(_need(inf, "model", "inference"), "inference.model")
        table = impute_pair_table(pairs, outcomes, h)
        curve = sensitivity_curve(
            table, _need(scfg, "mode", "sensitivity"),
            _grid(_need(scfg, "lambda_grid", "sensitivity"), "sensitivity.lambda_grid"),
            alpha=alpha, mc_draws=mc_draws, seed=seed, enumeration_cap=cap)
        with open(os.path.join(out_dir, "sensitivity_curve.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["lambda", "median_gamma", "p"])
            for lam, mg, p in zip(curve.lambda_grid, curve.median_gammas, curve.p_values):
                w.writerow([repr(float(lam)), repr(float(mg)), repr(float(p))])
        _write_json(os.path.join(out_dir, "report.json"), curve)
        outputs += ["sensitivity_curve.csv", "report.json"]

    else:
        raise ConfigError(f"inference.mode: unknown mode {mode!r}")

    _write_manifest(out_dir, "test", config_path, cfg, inputs, outputs)
    return 0


def _cmd_simulate(cfg: Mapping, config_path: str, out_dir: str) -> int:
    sim = _need(cfg, "simulate", "config")
    seed = int(sim.get("seed", 0))
    n = int(sim.get("n_counties", 30))
    horizon = int(sim.get("horizon", 120))
    start = str(sim.get("start_date", "2020-03-01"))
    try:
        base = SirConfig(population=1, beta0=float(sim.get("beta0", 0.35)),
                         gamma=float(sim.get("gamma", 0.12)),
                         i0_frac=float(sim.get("i0_frac", 1e-3)),
                         horizon=horizon,
                         death_fraction=float(sim.get("death_fraction", 0.01)),
                         death_delay=int(sim.get("death_delay", 14)))
    except ValueError as e:
        raise ConfigError(f"simulate: {e}") from None
    rng = np.random.Generator(np.random.Philox(seed))

    import datetime as _dt
    day0 = _dt.date.fromisoformat(start)
    dates = tuple((day0 + _dt.timedelta(days=t)).isoformat() for t in range(horizon))

    fips = tuple(f"9{k:04d}" for k in range(1, n + 1))
    names = {f: f"Synthetic County {k + 1}" for k, f in enumerate(fips)}
    covs, mob, cases, deaths = {}, {}, {}, {}
    for f in fips:
        pop = float(np.round(rng.uniform(4e4, 9e5)))
        dose = float(rng.uniform(-0.7, -0.1))
        z = dose + 0.05 * rng.standard_normal(horizon)
        cfg_c = dataclasses.replace(base, population=int(pop))
        res = simulate_sir(cfg_c, z)
        covs[f] = np.array([
            pop,
            float(np.round(rng.uniform(5, 2000), 1)),
            float(np.round(rng.uniform(30, 48), 1)),
            float(np.round(rng.uniform(0.08, 0.25), 4)),
            float(np.round(rng.uniform(35000, 90000))),
            float(np.round(rng.uniform(0.05, 0.25), 4)),
            float(np.round(rng.uniform(0.03, 0.15), 4)),
            float(np.round(rng.uniform(0.0, 0.4), 4)),
            float(np.round(rng.uniform(0.0, 0.5), 4)),
            float(np.round(rng.uniform(0.1, 0.5), 4)),
            float(np.round(rng.uniform(0.0, 1.0), 4)),
            float(np.round(rng.uniform(2.1, 3.4), 2)),
            float(np.round(rng.uniform(-0.1, 0.1), 4)),
        ])
        mob[f] = np.round(z, 6)
        cases[f] = res.new_cases.astype(float)
        deaths[f] = np.round(res.deaths, 6)
    paths = {k: os.path.join(out_dir, f"{k}.csv")
             for k in ("covariates", "mobility", "cases", "deaths", "adjacency")}
    write_panel_csvs(paths["covariates"], paths["mobility"], paths["cases"],
                     paths["deaths"], fips, names, covs, dates, mob, dates,
                     cases, deaths)
    ring = [(fips[k], fips[(k + 1) % n]) for k in range(n)]
    write_adjacency_csv(paths["adjacency"], ring)
    outputs = [os.path.basename(p) for p in paths.values()]

    audit_cfg = sim.get("audit")
    if audit_cfg:
        win_days = int(audit_cfg.get("window_days", 28))
        try:
            spec = CumulativeDoseSpec(
                reference_trajectory=np.full(win_days, float(audit_cfg.get("reference_dose", -0.5))),
                weights=np.ones(win_days), lag=int(audit_cfg.get("lag", 0)))
        except ValueError as e:
            raise ConfigError(f"simulate.audit: {e}") from None
        pop_a = int(audit_cfg.get("population", 250_000))
        aud = audit_w_equivalence(dataclasses.replace(base, population=pop_a), spec,
                                  n_trajectory_pairs=int(audit_cfg.get("n_trajectory_pairs", 40)),
                                  seed=seed + 1)
        _write_json(os.path.join(out_dir, "audit.json"),
                    {"equal_mean_rel": aud.equal_mean,
                     "control_mean_rel": aud.control_mean,
                     "outcome_scale": aud.outcome_scale,
                     "equal_rel": aud.equal_rel,
                     "control_rel": aud.control_rel})
        outputs.append("audit.json")

    fixture_cfg = sim.get("fixture")
    if fixture_cfg:
        truth = _hypothesis(_need(fixture_cfg, "truth", "simulate.fixture"),
                            "simulate.fixture.truth")
        units, fpairs = generate_matched_fixture(
            int(fixture_cfg.get("n_pairs", 50)), truth,
            noise_sd=float(fixture_cfg.get("noise_sd", 1.0)), seed=seed + 2)
        with open(os.path.join(out_dir, "fixture_units.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["id", "dose", "outcome"])
            for u in units:
                w.writerow([u.id, repr(u.dose), repr(u.outcome)])
        write_match_csv(fpairs, os.path.join(out_dir, "fixture_pairs.csv"))
        outputs += ["fixture_units.csv", "fixture_pairs.csv"]

    _write_manifest(out_dir, "simulate", config_path, cfg, [config_path], outputs)
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="dosepair",
        description="matched-pair dose designs: match, test, simulate")
    parser.add_argument("command", choices=["match", "test", "simulate"])
    parser.add_argument("--config", required=True, help="JSON config file")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--threads", type=int, default=1,
                        help="cap on compute threads (outputs are thread-invariant)")
    args = parser.parse_args(argv)

    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 4
    os.environ.setdefault("OMP_NUM_THREADS", str(args.threads))
    try:
        with open(args.config) as fh:
            cfg = json.load(fh)
        if not isinstance(cfg, dict):
            raise ConfigError("config root must be a JSON object")
    except FileNotFoundError:
        print(f"error: config file not found: {args.config}", file=sys.stderr)
        return 4
    except json.JSONDecodeError as e:
        print(f"error: config is not valid JSON: {e}", file=sys.stderr)
        return 4
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 4

    os.makedirs(args.out, exist_ok=True)
    handler = {"match": _cmd_match, "test": _cmd_test, "simulate": _cmd_simulate}
    try:
        return handler[args.command](cfg, args.config, args.out)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 4
    except MatchingInfeasibleError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except (ValueError, KeyError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
