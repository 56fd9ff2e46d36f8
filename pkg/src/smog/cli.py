"""Command-line interface: ``smog {fit,tune,simulate,predict,subgroup}``.

Options come from an optional JSON file (``--config``) whose keys are the long
flag names with dashes replaced by underscores; flags given on the command
line override it. Exit status is 0 on success, 1 when the solver did not
converge (outputs are still written and flagged) and 2 on invalid input, in
which case ``error.json`` describes the problem.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from .core import Coefficients, DataError, Dataset, PenaltyParams, hierarchy_satisfied, read_csv
from .solver import FitResult, SolverOptions, fit

SCHEMA = "smog/1"
EXIT_OK, EXIT_NONCONVERGED, EXIT_INPUT = 0, 1, 2

DEFAULTS = {
    "input": None, "response": "gaussian", "response_cols": None, "treatment_col": "treatment",
    "lambda1": None, "lambda2": 1e-6, "lambda3": None, "rho": None,
    "eps_abs": 1e-5, "eps_rel": 1e-5, "max_iter": 5000,
    "criterion": "cv", "delta": [0.9], "max_steps": 20, "folds": 5,
    "seed": 0, "threads": None, "out_dir": ".",
    "fit": None, "threshold": 0.0,
    "scenario": "III", "n": 200, "d": 200, "replicates": 20,
}
SIM_RESPONSE = {"gaussian": "gaussian", "multinomial": "binary", "cox": "cox"}


class InputError(Exception):
    def __init__(self, message, column=None):
        super().__init__(message)
        self.column = column


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("shared options")
    g.add_argument("--config", help="JSON file of option values (flags override it)")
    g.add_argument("--input", help="input CSV with a header row")
    g.add_argument("--response", choices=["gaussian", "multinomial", "cox"],
                   help="response type (default: gaussian)")
    g.add_argument("--response-cols", nargs="+",
                   help="response column(s) (default: y, or time status for cox)")
    g.add_argument("--treatment-col", help="treatment column coded -1/+1 (default: treatment)")
    g.add_argument("--lambda1", type=float, help="group penalty")
    g.add_argument("--lambda2", type=float, help="ridge penalty (default: 1e-6)")
    g.add_argument("--lambda3", type=float, help="predictive-effect penalty")
    g.add_argument("--rho", type=float,
                   help="ADMM penalty (default: scaled to the sample size and loss curvature)")
    g.add_argument("--eps-abs", type=float, help="absolute stopping tolerance (default: 1e-5)")
    g.add_argument("--eps-rel", type=float, help="relative stopping tolerance (default: 1e-5)")
    g.add_argument("--max-iter", type=int, help="iteration cap (default: 5000)")
    g.add_argument("--criterion", choices=["cv", "gcv", "aic", "bic", "caic"],
                   help="model-selection criterion (default: cv)")
    g.add_argument("--delta", type=float, nargs="+", help="damping ratio(s) (default: 0.9)")
    g.add_argument("--max-steps", type=int, help="greedy path length (default: 20)")
    g.add_argument("--folds", type=int, help="cross-validation folds (default: 5)")
    g.add_argument("--seed", type=int, help="seed for folds and simulation (default: 0)")
    g.add_argument("--threads", type=int, help="worker processes (default: all CPUs)")
    g.add_argument("--out-dir", help="output directory (default: .)")

    parser = argparse.ArgumentParser(prog="smog", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("fit", parents=[common], help="fit at fixed penalties")
    sub.add_parser("tune", parents=[common], help="greedy search over (lambda1, lambda3)")
    p = sub.add_parser("simulate", parents=[common], help="run a simulation study")
    p.add_argument("--scenario", choices=["I", "II", "III", "IV"], help="effect pattern (default: III)")
    p.add_argument("--n", type=int, help="sample size (default: 200)")
    p.add_argument("--d", type=int, help="number of biomarkers (default: 200)")
    p.add_argument("--replicates", type=int, help="number of replicates (default: 20)")
    p = sub.add_parser("predict", parents=[common], help="linear predictors for new data")
    p.add_argument("--fit", help="fit JSON written by 'fit' or 'tune'")
    p = sub.add_parser("subgroup", parents=[common], help="treatment-contrast subgroups")
    p.add_argument("--fit", help="fit JSON written by 'fit' or 'tune'")
    p.add_argument("--threshold", type=float, help="contrast cut-off (default: 0)")
    return parser


def resolve_config(args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS)
    if args.config:
        try:
            with open(args.config) as fh:
                loaded = json.load(fh)
        except (OSError, json.JSONDecodeError) as err:
            raise InputError(f"cannot read config {args.config}: {err}") from None
        if not isinstance(loaded, dict):
            raise InputError("config must be a JSON object")
        unknown = sorted(set(loaded) - set(DEFAULTS))
        if unknown:
            raise InputError(f"unknown config key(s): {', '.join(unknown)}")
        cfg.update(loaded)
    for key, value in vars(args).items():
        if key in DEFAULTS and value is not None:
            cfg[key] = value
    if isinstance(cfg["delta"], (int, float)):
        cfg["delta"] = [cfg["delta"]]
    if cfg["threads"] is None:
        cfg["threads"] = os.cpu_count() or 1
    return cfg


def solver_options(cfg) -> SolverOptions:
    try:
        return SolverOptions(rho=cfg["rho"], eps_abs=cfg["eps_abs"], eps_rel=cfg["eps_rel"],
                             max_iter=cfg["max_iter"])
    except ValueError as err:
        raise InputError(str(err)) from None


def load_dataset(cfg) -> Dataset:
    if not cfg["input"]:
        raise InputError("no input file given (--input)")
    if not Path(cfg["input"]).is_file():
        raise InputError(f"input file not found: {cfg['input']}")
    return read_csv(cfg["input"], cfg["response"], cfg["response_cols"], cfg["treatment_col"])


def _out(cfg, name) -> Path:
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out / name


# ---------------------------------------------------------------------------
# fit serialization
# ---------------------------------------------------------------------------

def _num(v):
    v = float(v)
    return v if math.isfinite(v) else None


def fit_document(result: FitResult, extra=None) -> dict:
    """JSON-ready description of a fit; zero coefficients are omitted."""
    design = result.design
    coef = result.coefficients
    names = list(design.names)
    rows, active = [], []
    for k in range(coef.n_classes):
        for j, name in enumerate(names):
            b, g = coef.beta[k, j], coef.gamma[k, j]
            if b != 0 or g != 0:
                row = {"name": name, "beta": float(b), "gamma": float(g)}
                if coef.n_classes > 1:
                    row["class"] = k + 1
                rows.append(row)
                if name not in active:
                    active.append(name)
    pen = result.penalty_params
    doc = {
        "schema": SCHEMA,
        "response": design.kind,
        "n": design.n, "d": design.d, "n_classes": coef.n_classes,
        "converged": bool(result.converged),
        "iterations": int(result.iterations),
        "residuals": {"primal": _num(result.primal_residual), "dual": _num(result.dual_residual),
                      "primal_tol": _num(result.primal_tol), "dual_tol": _num(result.dual_tol)},
        "penalty": {"lambda1": pen.lambda1, "lambda2": pen.lambda2, "lambda3": pen.lambda3,
                    "rho": float(result.rho)},
        "objective": {"loss": _num(result.loss), "penalty": _num(result.penalty),
                      "total": _num(result.objective)},
        "hierarchy_ok": hierarchy_satisfied(coef),
        "standardization": {"names": names, "x_mean": [float(v) for v in design.x_mean],
                            "x_scale": [float(v) for v in design.x_scale],
                            "y_mean": float(design.y_mean)},
        "tau": [float(v) for v in coef.tau],
        "coefficients": rows,
        "active": active,
    }
    if extra:
        doc.update(extra)
    return doc


def load_fit(path):
    """Read a fit JSON back into ``(doc, Coefficients)``."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as err:
        raise InputError(f"cannot read fit {path}: {err}") from None
    if doc.get("schema") != SCHEMA:
        raise InputError(f"{path}: expected schema {SCHEMA!r}")
    names = doc["standardization"]["names"]
    index = {n: j for j, n in enumerate(names)}
    m, d = doc["n_classes"], doc["d"]
    beta, gamma = np.zeros((m, d)), np.zeros((m, d))
    for row in doc["coefficients"]:
        k = row.get("class", 1) - 1
        beta[k, index[row["name"]]] = row["beta"]
        gamma[k, index[row["name"]]] = row["gamma"]
    return doc, Coefficients(np.asarray(doc["tau"], dtype=float), beta, gamma)


def linear_predictors(doc, coef: Coefficients, dataset: Dataset) -> np.ndarray:
    """``n x m`` linear predictors of ``dataset`` under a stored fit."""
    st = doc["standardization"]
    if list(dataset.names) != st["names"]:
        missing = [n for n in st["names"] if n not in dataset.names]
        if missing:
            raise InputError(f"missing column: {missing[0]!r}", column=missing[0])
        raise InputError("covariate columns differ from the fitted model")
    X = (dataset.covariates - np.asarray(st["x_mean"])) / np.asarray(st["x_scale"])
    t = dataset.treatment
    M = np.column_stack([t, X, X * t[:, None]])
    return M @ coef.to_matrix().T


def write_predictions(path, doc, eta: np.ndarray) -> None:
    m = eta.shape[1]
    head = ["subject"] + (["eta"] if m == 1 else [f"eta_{k + 1}" for k in range(m)])
    cols = [eta[:, k] for k in range(m)]
    if doc["response"] == "gaussian":
        head.append("fitted")
        cols.append(doc["standardization"]["y_mean"] + eta[:, 0])
    elif doc["response"] == "multinomial":
        full = np.column_stack([eta, np.zeros(eta.shape[0])])
        full -= full.max(axis=1, keepdims=True)
        prob = np.exp(full)
        prob /= prob.sum(axis=1, keepdims=True)
        head += [f"prob_{k + 1}" for k in range(m + 1)]
        cols += [prob[:, k] for k in range(m + 1)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(head)
        for i in range(eta.shape[0]):
            w.writerow([i + 1] + [repr(float(c[i])) for c in cols])


def _write_json(path, doc) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def _write_active_table(path, doc) -> None:
    with open(path, "w") as fh:
        fh.write(f"{'name':<24}{'class':>6}{'beta':>16}{'gamma':>16}\n")
        for row in doc["coefficients"]:
            fh.write(f"{row['name']:<24}{row.get('class', 1):>6}"
                     f"{row['beta']:>16.6g}{row['gamma']:>16.6g}\n")


def _emit_fit(cfg, result: FitResult, extra=None) -> int:
    doc = fit_document(result, extra)
    _write_json(_out(cfg, "fit.json"), doc)
    _write_active_table(_out(cfg, "active.txt"), doc)
    eta = result.design.matrix @ result.coefficients.to_matrix().T
    write_predictions(_out(cfg, "fitted.csv"), doc, eta)
    return EXIT_OK if result.converged else EXIT_NONCONVERGED


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_fit(cfg) -> int:
    if cfg["lambda1"] is None or cfg["lambda3"] is None:
        raise InputError("fit needs --lambda1 and --lambda3")
    dataset = load_dataset(cfg)
    try:
        penalty = PenaltyParams(cfg["lambda1"], cfg["lambda2"], cfg["lambda3"])
    except ValueError as err:
        raise InputError(str(err)) from None
    result = fit(dataset, penalty, solver_options(cfg))
    extra = {}
    if dataset.kind == "gaussian":
        from .selection import aic, bic, caic, gcv

        crit = {}
        for name, fn in (("gcv", gcv), ("aic", aic), ("bic", bic), ("caic", caic)):
            try:
                crit[name] = _num(fn(result))
            except (ValueError, ArithmeticError, np.linalg.LinAlgError):
                crit[name] = None
        extra["criteria"] = crit
    return _emit_fit(cfg, result, extra)


def cmd_tune(cfg) -> int:
    from .selection import PathTrace, tune

    dataset = load_dataset(cfg)
    deltas = [float(v) for v in cfg["delta"]]
    if not deltas or any(not 0 < v < 1 for v in deltas):
        raise InputError("every --delta must lie in (0, 1)")
    if cfg["max_steps"] < 1 or cfg["folds"] < 2:
        raise InputError("--max-steps must be >= 1 and --folds >= 2")
    best, traces = tune(dataset, cfg["criterion"], deltas, max_steps=cfg["max_steps"],
                        lambda2=cfg["lambda2"], folds=cfg["folds"], seed=cfg["seed"],
                        options=solver_options(cfg))
    with open(_out(cfg, "path.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["delta", *PathTrace.COLUMNS, "chosen"])
        for tr in traces:
            for i, r in enumerate(tr.rows):
                vals = [r[c] for c in PathTrace.COLUMNS]
                w.writerow([repr(tr.delta)] + [repr(v) if isinstance(v, float) else v for v in vals]
                           + [int(i == tr.chosen)])
    if best.fit is None:
        raise InputError("criterion could not be evaluated anywhere on the path")
    extra = {"tuning": {"criterion": cfg["criterion"], "delta": best.delta,
                        "lambda0": best.lambda0, "value": _num(best.criterion),
                        "step": best.chosen}}
    return _emit_fit(cfg, best.fit, extra)


def cmd_simulate(cfg) -> int:
    from .simulate import MethodConfig, Scenario, run_study

    try:
        scenario = Scenario(cfg["scenario"], int(cfg["n"]), int(cfg["d"]),
                            SIM_RESPONSE[cfg["response"]], int(cfg["seed"]))
        method = MethodConfig(criterion=cfg["criterion"], delta=float(cfg["delta"][0]),
                              max_steps=cfg["max_steps"], folds=cfg["folds"], lambda2=0.0,
                              eps_abs=cfg["eps_abs"], eps_rel=cfg["eps_rel"],
                              max_iter=cfg["max_iter"], rho=cfg["rho"])
        replicates = int(cfg["replicates"])
        if replicates < 1:
            raise ValueError("--replicates must be at least 1")
    except ValueError as err:
        raise InputError(str(err)) from None
    study = run_study(scenario, replicates, method, n_jobs=cfg["threads"])
    study.write_csv(_out(cfg, "summary.csv"), _out(cfg, "replicates.csv"))
    return EXIT_OK


def cmd_predict(cfg) -> int:
    if not cfg["fit"]:
        raise InputError("predict needs --fit")
    doc, coef = load_fit(cfg["fit"])
    cfg = dict(cfg, response=doc["response"])
    dataset = load_dataset(cfg)
    write_predictions(_out(cfg, "predictions.csv"), doc, linear_predictors(doc, coef, dataset))
    return EXIT_OK


def cmd_subgroup(cfg) -> int:
    from .analysis import dichotomize, subgroup_summary, survival_table, write_subgroups

    if not cfg["fit"]:
        raise InputError("subgroup needs --fit")
    doc, coef = load_fit(cfg["fit"])
    cfg = dict(cfg, response=doc["response"])
    dataset = load_dataset(cfg)
    linear_predictors(doc, coef, dataset)  # validates the columns
    st = doc["standardization"]
    X = (dataset.covariates - np.asarray(st["x_mean"])) / np.asarray(st["x_scale"])
    z = X @ coef.gamma[0]
    labels = dichotomize(z, cfg["threshold"])
    summary = subgroup_summary(dataset, labels)
    write_subgroups(_out(cfg, "subgroups.csv"), _out(cfg, "subgroups.json"), z, labels, summary)
    if dataset.kind == "cox":
        rows = survival_table(dataset, labels)
        with open(_out(cfg, "survival_table.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["group", "arm", "time", "n_risk", "n_event", "survival"])
            for r in rows:
                w.writerow([r["group"], r["arm"], repr(r["time"]), r["n_risk"], r["n_event"],
                            repr(r["survival"])])
    return EXIT_OK


COMMANDS = {"fit": cmd_fit, "tune": cmd_tune, "simulate": cmd_simulate,
            "predict": cmd_predict, "subgroup": cmd_subgroup}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    cfg = None
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg)
    except (InputError, DataError) as err:
        doc = {"schema": SCHEMA, "error": "input", "message": str(err),
               "column": getattr(err, "column", None)}
        print(json.dumps(doc), file=sys.stderr)
        try:
            _write_json(_out(cfg or {"out_dir": args.out_dir or "."}, "error.json"), doc)
        except OSError:
            pass
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
