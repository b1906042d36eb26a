"""Command-line front end: fit, simulate, segindex, validate.

Configuration is a single JSON file; ``--seed``, ``--k``, ``--restarts``
and ``--mode`` flags override it.  Exit codes: 0 success, 2 configuration
or data error, 3 numerical failure.  Failures print a machine-readable
error JSON to stdout.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from . import io
from .api import TypedEventStudy
from .errors import ConfigError, EstimationError
from .inference import default_balance_variables
from .panel import validate as validate_panel
from .segregation import segregation_index
from .simulate import DgpSpec, generate, make_preset, match_types, misclassification_rate
from .transform import MEAN_DIFF, MODES

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def _load_config(args, required=("input",)) -> dict:
    config = io.read_json(args.config)
    for flag in ("seed", "k", "restarts", "mode", "outputs", "input"):
        val = getattr(args, flag, None)
        if val is not None:
            config[flag] = val
    for key in required:
        if key not in config:
            raise ConfigError(f"config is missing required key '{key}'")
    return config


def _columns(config) -> dict:
    cols = config.get("columns", {})
    return {
        "unit_col": cols.get("unit", "unit"),
        "time_col": cols.get("time", "time"),
        "outcome_col": cols.get("outcome", "outcome"),
        "treatment_col": cols.get("treatment_time", "treat_time"),
        "covariate_cols": tuple(cols.get("covariates", ())),
    }


def _estimator(config) -> TypedEventStudy:
    mode = config.get("mode", "first-diff")
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}")
    if mode == MEAN_DIFF:
        print(
            "warning: mean differencing assumes strictly exogenous errors; "
            "treatment may not respond to past shocks",
            file=sys.stderr,
        )
    cols = _columns(config)
    return TypedEventStudy(
        n_types=int(config.get("k", 2)),
        lead_window=int(config.get("lead_window", 0)),
        lag_bin=config.get("lag_bin"),
        shared_leads=bool(config.get("shared_leads", False)),
        type_specific_slopes=bool(config.get("type_specific_slopes", False)),
        mode=mode,
        restarts=int(config.get("restarts", 50)),
        max_iterations=int(config.get("max_iterations", 100)),
        tolerance=float(config.get("tolerance", 0.0)),
        random_state=int(config.get("seed", 0)),
        **cols,
    )


def cmd_fit(args) -> int:
    config = _load_config(args)
    outdir = Path(config.get("outputs", "."))
    outdir.mkdir(parents=True, exist_ok=True)
    cols = _columns(config)
    panel = io.read_panel_csv(config["input"], **cols)
    est = _estimator(config).fit(panel)

    io.write_csv(
        pd.DataFrame({"unit": est.panel_.units, "type": est.labels_}),
        outdir / "assignments.csv",
    )
    io.write_csv(est.effects_.effects, outdir / "effects.csv")
    io.write_csv(est.effects_.timefe, outdir / "timefe.csv")
    balance_joint = None
    if est.panel_.n_covariates:
        bal = est.balance(default_balance_variables(est.panel_))
        io.write_csv(bal.table, outdir / "balance.csv")
        balance_joint = bal.joint.to_dict(orient="records")
    io.write_json(
        _jsonable({
            "balance_joint": balance_joint,
            "objective": est.objective_,
            "iterations": est.n_iter_,
            "stopped": est.result_.stopped,
            "restarts": est.restart_summaries_,
            "dropped_columns": est.dropped_columns_,
            "warnings": est.warnings_,
            "notes": est.effects_.notes,
            "min_type_size": est.min_type_size_,
            "timings_per_type": est.timing_counts_,
            "calendar_origin": est.calendar_origin_,
            "config": {k: v for k, v in config.items() if k != "outputs"},
        }),
        outdir / "fit.json",
    )
    return EXIT_OK


def _simulate_once(dgp: DgpSpec, config, rep_seed: int) -> dict:
    from dataclasses import replace

    panel, truth, params = generate(replace(dgp, seed=rep_seed))
    est = _estimator({**config, "seed": rep_seed}).fit(panel)
    row = {"misclassification": misclassification_rate(est.assignment_, truth)}
    mapping = match_types(est.labels_, truth)
    eff = est.effects_.effects
    for est_k, true_k in sorted(mapping.items()):
        sel = eff[(eff["type"] == est_k) & (eff["rel_time"] == 0)]
        if sel.empty:
            row[f"bias_beta0_k{true_k}"] = np.nan
            row[f"covered_beta0_k{true_k}"] = np.nan
            continue
        coef = float(sel["coef_cum"].iloc[0])
        se = float(sel["se"].iloc[0])
        truth_val = float(dgp.beta_profiles[true_k - 1, 0])
        row[f"bias_beta0_k{true_k}"] = coef - truth_val
        row[f"covered_beta0_k{true_k}"] = float(abs(coef - truth_val) <= 1.96 * se)
    if config.get("compare_pooled"):
        pooled = _estimator({**config, "seed": rep_seed, "k": 1}).fit(panel)
        peff = pooled.effects_.effects
        sel = peff[(peff["type"] == 1) & (peff["rel_time"] == 0)]
        coef = float(sel["coef_cum"].iloc[0]) if not sel.empty else np.nan
        truth_val = float(dgp.beta_profiles[:, 0].mean())
        row["bias_beta0_pooled"] = coef - truth_val
    return row


def cmd_simulate(args) -> int:
    config = _load_config(args, required=())
    if "preset" not in config and "dgp" not in config:
        raise ConfigError("config needs a 'preset' name or an explicit 'dgp' block")
    overrides = dict(config.get("dgp", {}))
    if "preset" in config:
        dims = {
            key: overrides.pop(key)
            for key in ("n_units", "t0", "t1", "noise_sd")
            if key in overrides
        }
        dgp = make_preset(config["preset"], seed=int(config.get("seed", 0)), **dims)
    else:
        raise ConfigError("explicit 'dgp' blocks must accompany a 'preset'")
    n_reps = int(config.get("n_reps", 100))
    outdir = Path(config.get("outputs", "."))
    outdir.mkdir(parents=True, exist_ok=True)

    seeds = np.random.SeedSequence(int(config.get("seed", 0))).generate_state(n_reps)
    rows = []
    for rep in range(n_reps):
        row = {"rep": rep}
        row.update(_simulate_once(dgp, config, int(seeds[rep])))
        rows.append(row)
    reps = pd.DataFrame(rows)
    io.write_csv(reps, outdir / "replications.csv")

    summary = {"n_reps": n_reps, "preset": config.get("preset")}
    for col in reps.columns:
        if col == "rep":
            continue
        summary[f"mean_{col}"] = float(reps[col].mean())
        if col.startswith("bias_"):
            summary[f"rmse_{col[5:]}"] = float(np.sqrt((reps[col] ** 2).mean()))
    io.write_json(_jsonable(summary), outdir / "summary.json")
    return EXIT_OK


def cmd_segindex(args) -> int:
    df = pd.read_csv(args.counts)
    for col in ("b", "w"):
        if col not in df.columns:
            raise ConfigError("counts CSV needs 'b' and 'w' columns")
    value = segregation_index(list(zip(df["b"], df["w"])))
    print(json.dumps({"segregation_index": value}))
    return EXIT_OK


def cmd_validate(args) -> int:
    config = _load_config(args)
    cols = _columns(config)
    panel = io.read_panel_csv(config["input"], **cols)
    problems = validate_panel(panel)
    print(json.dumps({"valid": not problems, "violations": problems}, indent=2))
    return EXIT_OK if not problems else EXIT_CONFIG


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ktwfe",
        description="Event-study estimation with latent unit types",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_input=True):
        p.add_argument("config", help="JSON configuration file")
        p.add_argument("--seed", type=int, help="override the RNG seed")
        p.add_argument("--k", type=int, help="override the number of types")
        p.add_argument("--restarts", type=int, help="override the restart count")
        p.add_argument("--mode", choices=MODES, help="override the differencing mode")
        p.add_argument("--outputs", help="override the output directory")
        if with_input:
            p.add_argument("--input", help="override the input CSV path")

    p_fit = sub.add_parser("fit", help="estimate types and effects from a CSV panel")
    common(p_fit)
    p_fit.set_defaults(func=cmd_fit)

    p_sim = sub.add_parser("simulate", help="run a Monte Carlo study")
    common(p_sim, with_input=False)
    p_sim.set_defaults(func=cmd_simulate)

    p_seg = sub.add_parser("segindex", help="segregation index from school counts")
    p_seg.add_argument("counts", help="CSV with 'b' and 'w' columns")
    p_seg.set_defaults(func=cmd_segindex)

    p_val = sub.add_parser("validate", help="check a CSV panel against the data contract")
    common(p_val)
    p_val.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(json.dumps({"error": {"kind": "config", "message": str(exc)}}))
        return EXIT_CONFIG
    except (EstimationError, np.linalg.LinAlgError) as exc:
        print(json.dumps({"error": {"kind": "numerical", "message": str(exc)}}))
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
