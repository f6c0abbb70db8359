"""Command-line interface: ``penaipw simulate | analyze | report | demo-data``.

Exit codes: 0 success, 2 configuration error, 3 data error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import json
import logging
import math
import platform
import sys
import time
import warnings
from decimal import ROUND_HALF_EVEN, Decimal
from pathlib import Path

import numpy as np

from . import __version__
from .data import DataError, drop_constant_columns, filter_rare_binaries, load_csv
from .estimators import (DATA_ESTIMATOR_IDS, ESTIMATOR_IDS, EstimationError, EstimatorConfig,
                         EstimatorSpec)
from .inference import bootstrap_many
from .simulation import ScenarioConfig, paper_grid, run_scenario
from .synthetic import write_synthetic

logger = logging.getLogger("penaipw")

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 2, 3

RESULT_COLUMNS = ["scenario_id", "n", "p", "rho", "confounding", "covariate_type", "misspec",
                  "estimator", "bias", "se", "rmse", "n_valid", "n_extreme"]
ESTIMATE_COLUMNS = ["scenario_id", "rep", "estimator", "theta_hat", "extreme"]
ANALYSIS_COLUMNS = ["estimator", "ate", "se", "ci_low", "ci_high", "b_requested", "b_valid"]
SCENARIO_KEYS = ("n", "p", "rho", "confounding", "covariate_type", "misspec", "reps", "seed",
                 "estimators")


class ConfigError(Exception):
    """Invalid command-line or configuration-file input (exit code 2)."""


# ---------------------------------------------------------------- formatting

def fmt_float(v) -> str:
    """Shortest round-trip text of a float; empty for NaN."""
    v = float(v)
    return "" if math.isnan(v) else repr(v)


def round3(v) -> str:
    """Three-decimal text with round-half-even applied to the decimal value."""
    if v is None or v == "" or (isinstance(v, float) and math.isnan(v)):
        return "-"
    d = Decimal(str(v)).quantize(Decimal("0.001"), rounding=ROUND_HALF_EVEN)
    return "0.000" if d == 0 else f"{d:.3f}"


def _render_table(header, rows) -> str:
    widths = [max(len(str(h)), *(len(str(r[i])) for r in rows)) if rows else len(str(h))
              for i, h in enumerate(header)]
    lines = ["  ".join(str(h).ljust(w) for h, w in zip(header, widths)),
             "  ".join("-" * w for w in widths)]
    lines += ["  ".join(str(c).ljust(w) for c, w in zip(r, widths)) for r in rows]
    return "\n".join(lines)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_csv(path: Path, columns, rows):
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        w.writerows(rows)


# ----------------------------------------------------------------- config io

def _parse_estimators(text, allowed=ESTIMATOR_IDS):
    if text is None or str(text).strip().lower() in ("", "all"):
        return tuple(allowed)
    ids = tuple(s.strip() for s in str(text).split(",") if s.strip())
    bad = [i for i in ids if i not in ESTIMATOR_IDS]
    if bad:
        raise ConfigError(f"unknown estimator {bad[0]!r}; choose from {', '.join(ESTIMATOR_IDS)}")
    return ids


def _scenario_from_mapping(m, name="scenario") -> ScenarioConfig:
    unknown = set(m) - set(SCENARIO_KEYS)
    if unknown:
        raise ConfigError(f"[{name}] unknown key {sorted(unknown)[0]!r}")
    try:
        kw = {}
        for key in ("n", "p", "reps", "seed"):
            if key in m:
                kw[key] = int(m[key])
        if "rho" in m:
            kw["rho"] = float(m["rho"])
        for key in ("confounding", "covariate_type", "misspec"):
            if key in m:
                kw[key] = str(m[key]).strip()
        if "estimators" in m:
            est = m["estimators"]
            kw["estimators"] = (tuple(est) if isinstance(est, (list, tuple))
                                else _parse_estimators(est))
        return ScenarioConfig(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{name}] {exc}") from exc


def load_scenarios(path) -> list:
    """Scenarios from an INI file (one section per scenario) or a manifest.

    INI keys: n, p, rho, confounding, covariate_type, misspec, reps, seed,
    estimators (comma-separated ids or ``all``). Keys in ``[DEFAULT]`` apply
    to every section. A ``manifest.json`` written by ``simulate`` is accepted
    too and reproduces that run.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"no such config file: {path}")
    if path.suffix == ".json":
        try:
            man = json.loads(path.read_text(encoding="utf-8"))
            return [_scenario_from_mapping(s, s.get("scenario_id", "scenario"))
                    for s in ({k: v for k, v in s.items() if k != "scenario_id"}
                              for s in man["config"]["scenarios"])]
        except (KeyError, json.JSONDecodeError) as exc:
            raise ConfigError(f"not a simulate manifest: {path}") from exc
    parser = configparser.ConfigParser()
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if not parser.sections():
        raise ConfigError(f"{path} defines no scenario sections")
    return [_scenario_from_mapping(dict(parser[s]), s) for s in parser.sections()]


def scenario_record(cfg: ScenarioConfig) -> dict:
    return {"scenario_id": cfg.scenario_id, "n": cfg.n, "p": cfg.p, "rho": cfg.rho,
            "confounding": cfg.confounding, "covariate_type": cfg.covariate_type,
            "misspec": cfg.misspec, "reps": cfg.reps, "seed": cfg.seed,
            "estimators": list(cfg.estimators)}


def _estimator_config_record(ec: EstimatorConfig) -> dict:
    f, o = ec.fit, ec.oal
    return {
        "fit": {"n_lambda": f.n_lambda, "min_ratio": f.min_ratio, "tol": f.tol,
                "max_sweeps": f.max_sweeps, "cv_folds": f.cv_folds, "cv_seed": f.cv_seed,
                "max_outer": f.max_outer, "weight_floor": f.weight_floor},
        "lambda_rules": dict(ec.lambda_rules),
        "oal": {"gamma": o.gamma, "lambda_exponents": list(o.lambda_exponents),
                "criterion": o.criterion, "zero_guard": o.zero_guard,
                "gamma_convergence_factor": o.gamma_convergence_factor},
        "farrell_pooled": ec.farrell_pooled,
        "aen_mix_grid": list(ec.aen_mix_grid),
        "lsp": {"delta": ec.lsp_delta, "l_max": ec.lsp_l_max},
    }


def _base_manifest(command, argv):
    return {"tool": "penaipw", "version": __version__, "command": command,
            "argv": list(argv), "python": platform.python_version(),
            "numpy": np.__version__, "warnings": []}


# ------------------------------------------------------------------ commands

def cmd_simulate(args, argv) -> int:
    if args.paper_grid == bool(args.config):
        raise ConfigError("give exactly one of --config or --paper-grid")
    if args.reps is not None and args.reps < 1:
        raise ConfigError("--reps must be >= 1")
    if args.jobs < 1:
        raise ConfigError("--jobs must be >= 1")
    if args.paper_grid:
        scenarios = paper_grid(reps=args.reps or 1000, seed=args.seed or 0)
    else:
        scenarios = load_scenarios(args.config)
    try:
        overrides = {}
        if args.reps is not None:
            overrides["reps"] = args.reps
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.estimators:
            overrides["estimators"] = _parse_estimators(args.estimators)
        scenarios = [s.replace(**overrides) for s in scenarios]
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    ids = [s.scenario_id for s in scenarios]
    if len(set(ids)) != len(ids):
        raise ConfigError("duplicate scenario definitions")
    est_cfg = EstimatorConfig()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = _base_manifest("simulate", argv)
    manifest["config"] = {"scenarios": [scenario_record(s) for s in scenarios],
                          "estimator_config": _estimator_config_record(est_cfg),
                          "ps_clip": args.clip}
    manifest["base_seed"] = [s.seed for s in scenarios][0] if scenarios else None
    if args.clip is not None:
        manifest["warnings"].append(f"propensity scores clipped to [{args.clip}, {1 - args.clip}]"
                                    " (no clipping by default)")
    timing = {}
    result_rows, estimate_rows = [], []
    for cfg in scenarios:
        t0 = time.perf_counter()
        logger.info("scenario %s: %d replications", cfg.scenario_id, cfg.reps)
        results, summary = run_scenario(cfg, est_cfg, jobs=args.jobs, ps_clip=args.clip)
        timing[cfg.scenario_id] = round(time.perf_counter() - t0, 3)
        for eid in cfg.estimators:
            s = summary[eid]
            result_rows.append([cfg.scenario_id, cfg.n, cfg.p, fmt_float(cfg.rho), cfg.confounding,
                                cfg.covariate_type, cfg.misspec, eid, fmt_float(s.bias),
                                fmt_float(s.se), fmt_float(s.rmse), s.n_valid, s.n_extreme])
            if s.n_failed:
                msg = f"{cfg.scenario_id} {eid}: {s.n_failed} replication(s) failed"
                manifest["warnings"].append(msg)
                logger.warning(msg)
        for r in results:
            for eid in cfg.estimators:
                estimate_rows.append([cfg.scenario_id, r.rep, eid, fmt_float(r.theta[eid]),
                                      int(r.extreme[eid])])
    _write_csv(out / "results.csv", RESULT_COLUMNS, result_rows)
    _write_csv(out / "estimates.csv", ESTIMATE_COLUMNS, estimate_rows)
    manifest["timing_seconds"] = timing
    manifest["outputs"] = {name: _sha256(out / name) for name in ("results.csv", "estimates.csv")}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {out / 'results.csv'}, {out / 'estimates.csv'}, {out / 'manifest.json'}")
    return EXIT_OK


def cmd_analyze(args, argv) -> int:
    ids = _parse_estimators(args.estimators, DATA_ESTIMATOR_IDS)
    if "AIPW-Targ" in ids:
        raise ConfigError("AIPW-Targ needs the true confounder/predictor sets and is only "
                          "available in simulations")
    if args.bootstrap < 2:
        raise ConfigError("--bootstrap must be >= 2")
    if args.clip is not None and not 0 < args.clip < 0.5:
        raise ConfigError("--clip must lie in (0, 0.5)")
    covs = "all" if not args.covariates else [c.strip() for c in args.covariates.split(",")]
    d = load_csv(args.data, args.outcome, args.treatment, covs)
    d, removed = filter_rare_binaries(d, args.min_minority)
    d, constant = drop_constant_columns(d)
    if d.p == 0:
        raise DataError("no covariates left after filtering")
    d.check_arms(2)
    manifest = _base_manifest("analyze", argv)
    manifest["data"] = {"path": str(args.data), "n": d.n, "p": d.p,
                        "rows_dropped_missing_outcome": d.n_dropped,
                        "removed_rare_binaries": removed, "removed_constant": constant,
                        "covariates": list(d.col_names)}
    if d.n_dropped:
        print(f"{d.n_dropped} row{'s' if d.n_dropped != 1 else ''} dropped (missing outcome)")
    if removed:
        print(f"removed rare binary covariates: {', '.join(removed)}")
    est_cfg = EstimatorConfig()
    manifest["config"] = {"estimators": list(ids), "bootstrap": args.bootstrap,
                          "seed": args.seed, "ps_clip": args.clip,
                          "estimator_config": _estimator_config_record(est_cfg)}
    if args.clip is not None:
        manifest["warnings"].append(f"non-default: propensity scores clipped to "
                                    f"[{args.clip}, {1 - args.clip}]")
    specs = [EstimatorSpec(i, args.clip) for i in ids]
    t0 = time.perf_counter()
    res = bootstrap_many(d, specs, args.bootstrap, args.seed, est_cfg, jobs=args.jobs)
    manifest["timing_seconds"] = round(time.perf_counter() - t0, 3)
    rows = []
    for i in ids:
        r = res[i]
        rows.append([i, fmt_float(r.theta_hat), fmt_float(r.se), fmt_float(r.ci_low),
                     fmt_float(r.ci_high), r.b_requested, r.b_valid])
        if r.b_valid < r.b_requested:
            manifest["warnings"].append(f"{i}: {r.b_requested - r.b_valid} bootstrap "
                                        "resample(s) dropped")
    print(_render_table(["Estimator", "ATE", "Standard error", "95% CI"],
                        [[r[0], round3(r[1]), round3(r[2]),
                          f"({round3(r[3])} - {round3(r[4])})"] for r in rows]))
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        if out.suffix == ".json":
            out.write_text(json.dumps([dict(zip(ANALYSIS_COLUMNS, r)) for r in rows], indent=2)
                           + "\n", encoding="utf-8")
        else:
            _write_csv(out, ANALYSIS_COLUMNS, rows)
        manifest["outputs"] = {out.name: _sha256(out)}
        man_path = out.with_name(out.stem + ".manifest.json")
        man_path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
        print(f"wrote {out} and {man_path}")
    return EXIT_OK


def _read_results(path: Path, columns):
    if not path.exists():
        raise DataError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in columns if c not in header]
        if missing:
            raise DataError(f"{path.name}: missing column {missing[0]!r}")
        return list(reader)


def boxplot_rows(estimates):
    """Per (scenario, estimator) quantiles of the non-extreme estimates."""
    groups = {}
    for r in estimates:
        if r["theta_hat"] == "" or r["extreme"] == "1":
            continue
        groups.setdefault((r["scenario_id"], r["estimator"]), []).append(float(r["theta_hat"]))
    rows = []
    for (sid, eid), vals in groups.items():
        v = np.asarray(vals)
        q = np.quantile(v, [0.0, 0.25, 0.5, 0.75, 1.0])
        rows.append([sid, eid, len(v)] + [fmt_float(t) for t in q] + [fmt_float(v.mean())])
    return rows


def cmd_report(args, argv) -> int:
    rows = _read_results(Path(args.input), RESULT_COLUMNS)
    if args.format == "csv":
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        for r in rows:
            w.writerow([r[c] if c not in ("bias", "se", "rmse") or r[c] == "" else round3(r[c])
                        for c in RESULT_COLUMNS])
    elif args.format == "json":
        out = []
        for r in rows:
            item = {c: r[c] for c in RESULT_COLUMNS}
            for c in ("bias", "se", "rmse"):
                item[c] = None if r[c] == "" else float(round3(r[c]))
            item["n_valid"], item["n_extreme"] = int(r["n_valid"]), int(r["n_extreme"])
            out.append(item)
        print(json.dumps(out, indent=2))
    else:
        by_scn = {}
        for r in rows:
            by_scn.setdefault(r["scenario_id"], []).append(r)
        if not by_scn:
            print("(no results)")
        for sid, items in by_scn.items():
            print(f"\n{sid}")
            print(_render_table(["Estimator", "Bias", "SE", "RMSE", "n_valid", "n_extreme"],
                                [[r["estimator"], round3(r["bias"]), round3(r["se"]),
                                  round3(r["rmse"]), r["n_valid"], r["n_extreme"]]
                                 for r in items]))
    if args.boxplot_data:
        est_path = Path(args.estimates) if args.estimates else Path(args.input).with_name(
            "estimates.csv")
        est = _read_results(est_path, ESTIMATE_COLUMNS)
        _write_csv(Path(args.boxplot_data),
                   ["scenario_id", "estimator", "count", "min", "q1", "median", "q3", "max",
                    "mean"], boxplot_rows(est))
    return EXIT_OK


def cmd_demo_data(args, argv) -> int:
    if args.n < 10:
        raise ConfigError("--n must be >= 10")
    path = write_synthetic(args.out, args.n, args.seed)
    print(f"wrote {path}")
    return EXIT_OK


# -------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="penaipw", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run Monte Carlo scenarios")
    s.add_argument("--config", help="INI scenario file or a previous manifest.json")
    s.add_argument("--paper-grid", action="store_true", help="the 72-setting grid")
    s.add_argument("--reps", type=int, help="replications per scenario (overrides config)")
    s.add_argument("--seed", type=int, help="base seed (overrides config)")
    s.add_argument("--jobs", type=int, default=1, help="worker processes")
    s.add_argument("--estimators", help="comma-separated estimator ids (default: all)")
    s.add_argument("--clip", type=float, help="clip propensity scores to [c, 1-c]")
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_simulate)

    a = sub.add_parser("analyze", help="estimate effects on a CSV dataset with bootstrap CIs")
    a.add_argument("--data", required=True)
    a.add_argument("--outcome", required=True)
    a.add_argument("--treatment", required=True)
    a.add_argument("--covariates", help="comma-separated columns (default: all others)")
    a.add_argument("--estimators", help="comma-separated ids (default: all except AIPW-Targ)")
    a.add_argument("--bootstrap", type=int, default=1000, help="bootstrap resamples")
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--clip", type=float, help="clip propensity scores to [c, 1-c]")
    a.add_argument("--min-minority", type=float, default=0.005,
                   help="drop binary covariates whose rarer value is below this share")
    a.add_argument("--jobs", type=int, default=1)
    a.add_argument("--out", help="write the table as .csv or .json")
    a.set_defaults(func=cmd_analyze)

    r = sub.add_parser("report", help="render results.csv")
    r.add_argument("--in", dest="input", required=True)
    r.add_argument("--format", choices=("table", "csv", "json"), default="table")
    r.add_argument("--boxplot-data", help="write per-estimator quantiles to this CSV")
    r.add_argument("--estimates", help="estimates.csv (default: next to --in)")
    r.set_defaults(func=cmd_report)

    g = sub.add_parser("demo-data", help="write the synthetic confounded dataset")
    g.add_argument("--out", required=True)
    g.add_argument("--n", type=int, default=5000)
    g.add_argument("--seed", type=int, default=20240501)
    g.set_defaults(func=cmd_demo_data)
    return p


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            return args.func(args, argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, EstimationError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
