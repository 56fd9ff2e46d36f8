"""Simulation scenarios, response generators and selection metrics.

Four effect patterns over the first biomarkers (the rest are null):

=====  ==============================================================
I      prognostic only: beta = 0.2 on 1..5
II     predictive only: gamma = 0.2 on 1..5
III    both: beta = gamma = 0.2 on 1..5
IV     mixture, 0.14: beta on 1..5, gamma on 6..10, both on 11..15
=====  ==============================================================

Covariates are standard normal, treatment is uniform on {-1, +1}, the treatment
effect is 0.63 and the Gaussian noise variance 0.2.
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from .core import Categorical, Coefficients, Continuous, Dataset, Survival, hierarchy_satisfied
from .losses import CoxLoss, MultinomialLoss

logger = logging.getLogger(__name__)

RESPONSES = ("gaussian", "binary", "cox")
MAX_TIME = 100.0
CENSOR_RATE = 0.1


@dataclass(frozen=True)
class Scenario:
    kind: str = "III"
    n: int = 200
    d: int = 200
    response: str = "gaussian"
    seed: int = 0
    tau: float = 0.63
    noise_var: float = 0.2

    def __post_init__(self):
        if self.kind not in ("I", "II", "III", "IV"):
            raise ValueError(f"unknown scenario {self.kind!r}")
        if self.response not in RESPONSES:
            raise ValueError(f"response must be one of {RESPONSES}")
        if self.d < (15 if self.kind == "IV" else 5):
            raise ValueError(f"scenario {self.kind} needs more biomarkers than d={self.d}")
        if self.n < 2:
            raise ValueError("n must be at least 2")

    def truth(self) -> Coefficients:
        beta, gamma = np.zeros(self.d), np.zeros(self.d)
        if self.kind == "I":
            beta[:5] = 0.2
        elif self.kind == "II":
            gamma[:5] = 0.2
        elif self.kind == "III":
            beta[:5] = gamma[:5] = 0.2
        else:
            beta[:5] = 0.14
            gamma[5:10] = 0.14
            beta[10:15] = gamma[10:15] = 0.14
        return Coefficients(self.tau, beta, gamma)

    def signal_to_noise(self) -> float:
        """``Var(sum beta_j x_j + gamma_j w_j) / noise_var`` (unit-variance covariates)."""
        tr = self.truth()
        return float((tr.beta ** 2).sum() + (tr.gamma ** 2).sum()) / self.noise_var


def _linear_response(sc: Scenario, rng):
    X = rng.standard_normal((sc.n, sc.d))
    t = rng.choice(np.array([-1.0, 1.0]), size=sc.n)
    tr = sc.truth()
    y = sc.tau * t + X @ tr.beta[0] + (X * t[:, None]) @ tr.gamma[0]
    y = y + rng.normal(0.0, math.sqrt(sc.noise_var), sc.n)
    return X, t, y


def _censor_fraction(c_max, rates):
    # P(C < T) for T ~ Exp(rate), C ~ U(0, c_max), averaged over rates
    x = rates * c_max
    return float(np.mean(-np.expm1(-x) / x))


@lru_cache(maxsize=64)
def censoring_bound(sc: Scenario, pilot_size: int = 20000) -> float:
    """Upper end of the uniform censoring distribution giving a 10% censoring rate.

    Solved once per scenario from a pilot draw of linear predictors.
    """
    pilot = Scenario(sc.kind, pilot_size, sc.d, "gaussian", sc.seed, sc.tau, sc.noise_var)
    rng = np.random.default_rng([sc.seed, 2 ** 32 - 1])
    _, _, y = _linear_response(pilot, rng)
    rates = np.exp(y)
    return brentq(lambda c: _censor_fraction(c, rates) - CENSOR_RATE, 1e-8, 1e8, xtol=1e-12)


def _draw(sc: Scenario, rng) -> Dataset:
    X, t, y = _linear_response(sc, rng)
    if sc.response == "gaussian":
        resp = Continuous(y)
    elif sc.response == "binary":
        # event coded as class 1, class 2 is the pivot
        event = rng.random(sc.n) < 1.0 / (1.0 + np.exp(-y))
        resp = Categorical(np.where(event, 1, 2), 2)
    else:
        # unit-rate exponential baseline hazard
        T = -np.log(rng.random(sc.n)) / np.exp(y)
        C = rng.uniform(0.0, censoring_bound(sc), sc.n)
        time = np.minimum(np.minimum(T, C), MAX_TIME)
        status = ((T <= C) & (T <= MAX_TIME)).astype(int)
        resp = Survival(time, status)
    return Dataset(resp, t, X)


def generate(scenario: Scenario, replicate: int = 0):
    """Independent ``(train, test, truth)`` for one replicate.

    The stream depends only on ``(scenario.seed, replicate)``.
    """
    rng = np.random.default_rng([scenario.seed, replicate])
    train = _draw(scenario, rng)
    test = _draw(scenario, rng)
    return train, test, scenario.truth()


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

@dataclass
class EvalReport:
    f1_prognostic: float
    f1_predictive: float
    hierarchy_ok: bool
    test_error: float


def f1_score(selected, true) -> float:
    """F1 of a selected support against the true one.

    Zero when nothing true exists or nothing is selected.
    """
    selected = np.asarray(selected, dtype=bool)
    true = np.asarray(true, dtype=bool)
    hits = np.sum(selected & true)
    if true.sum() == 0 or selected.sum() == 0 or hits == 0:
        return 0.0
    sens = hits / true.sum()
    ppv = hits / selected.sum()
    return float(2 * sens * ppv / (sens + ppv))


def test_error(result, test: Dataset) -> float:
    """Prediction error of a fit on held-out data.

    Mean squared error (continuous), mean negative log-likelihood
    (categorical), or the negative partial log-likelihood (survival).
    ``result`` may also be raw-scale :class:`Coefficients`, such as the truth.
    """
    X, t = test.covariates, test.treatment
    if isinstance(result, Coefficients):
        M, coef, offset = np.column_stack([t, X, X * t[:, None]]), result, 0.0
    else:
        design = result.design
        M, coef, offset = design.transform(X, t), result.coefficients, design.y_mean
    theta = coef.to_vector()
    resp = test.response
    if isinstance(resp, Continuous):
        return float(np.mean((resp.y - offset - M @ theta) ** 2))
    if isinstance(resp, Categorical):
        return MultinomialLoss(M, resp.labels, resp.n_classes).value(theta) / test.n
    return CoxLoss(M, resp.time, resp.status).value(theta)


def evaluate(result, truth: Coefficients, test: Dataset) -> EvalReport:
    """Selection F1 scores, hierarchy check and test error of one fit."""
    coef = result if isinstance(result, Coefficients) else result.coefficients
    return EvalReport(
        f1_prognostic=f1_score(coef.beta[0] != 0, truth.beta[0] != 0),
        f1_predictive=f1_score(coef.gamma[0] != 0, truth.gamma[0] != 0),
        hierarchy_ok=hierarchy_satisfied(coef),
        test_error=test_error(result, test),
    )


# ---------------------------------------------------------------------------
# studies
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MethodConfig:
    criterion: str = "cv"
    delta: float = 0.9
    max_steps: int = 20
    folds: int = 5
    lambda2: float = 0.0
    eps_abs: float = 1e-5
    eps_rel: float = 1e-5
    max_iter: int = 5000
    rho: Optional[float] = None


@dataclass
class StudyResult:
    scenario: Scenario
    config: MethodConfig
    rows: list = field(default_factory=list)
    failures: int = 0

    def aggregate(self) -> dict:
        ok = [r for r in self.rows if r["error"] == ""]
        def mean(key):
            return float(np.mean([r[key] for r in ok])) if ok else float("nan")
        return {
            "scenario": self.scenario.kind, "response": self.scenario.response,
            "n": self.scenario.n, "d": self.scenario.d, "criterion": self.config.criterion,
            "replicates": len(self.rows), "failed": self.failures,
            "prog": mean("f1_prognostic"), "pred": mean("f1_predictive"),
            "hierarchy": mean("hierarchy_ok"), "mse": mean("test_error"),
        }

    def write_csv(self, summary_path, raw_path=None) -> None:
        agg = self.aggregate()
        with open(summary_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(list(agg))
            w.writerow([_fmt(v) for v in agg.values()])
        if raw_path is not None:
            keys = ["replicate", "f1_prognostic", "f1_predictive", "hierarchy_ok", "test_error",
                    "lambda1", "lambda3", "n_beta", "n_gamma", "error"]
            with open(raw_path, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(keys)
                for r in self.rows:
                    w.writerow([_fmt(r[k]) for k in keys])


def _fmt(v):
    if isinstance(v, bool):
        return int(v)
    if isinstance(v, float):
        return repr(v)
    return v


def run_replicate(scenario: Scenario, config: MethodConfig, replicate: int) -> dict:
    """Generate, tune, fit and score one replicate; failures are captured in ``error``."""
    from .selection import greedy_search
    from .solver import SolverOptions

    row = {"replicate": replicate, "f1_prognostic": float("nan"), "f1_predictive": float("nan"),
           "hierarchy_ok": False, "test_error": float("nan"), "lambda1": float("nan"),
           "lambda3": float("nan"), "n_beta": 0, "n_gamma": 0, "error": ""}
    try:
        train, test, truth = generate(scenario, replicate)
        opts = SolverOptions(rho=config.rho, eps_abs=config.eps_abs, eps_rel=config.eps_rel,
                             max_iter=config.max_iter)
        trace = greedy_search(train, config.criterion, delta=config.delta,
                              max_steps=config.max_steps, lambda2=config.lambda2,
                              folds=config.folds, seed=scenario.seed + replicate, options=opts)
        result = trace.fit
        report = evaluate(result, truth, test)
        row.update(asdict(report))
        row["hierarchy_ok"] = bool(report.hierarchy_ok)
        row["lambda1"], row["lambda3"] = trace.lambda1, trace.lambda3
        row["n_beta"], row["n_gamma"] = result.n_active()
    except Exception as err:  # a failed replicate is recorded, not fatal
        logger.warning("replicate %d failed: %s", replicate, err)
        row["error"] = f"{type(err).__name__}: {err}"
    return row


def _run_one(args):
    return run_replicate(*args)


def run_study(scenario: Scenario, replicates: int, config: Optional[MethodConfig] = None,
              n_jobs: int = 1) -> StudyResult:
    """Run ``replicates`` independent replicates and collect their reports.

    Replicates may run in worker processes; results are ordered by index.
    """
    if replicates < 1:
        raise ValueError("replicates must be at least 1")
    config = config or MethodConfig()
    jobs = [(scenario, config, r) for r in range(replicates)]
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            rows = list(pool.map(_run_one, jobs))
    else:
        rows = [_run_one(j) for j in jobs]
    failures = sum(r["error"] != "" for r in rows)
    return StudyResult(scenario, config, rows, failures)
