"""Model-selection criteria and the greedy ``(lambda1, lambda3)`` path search.

Criteria are written for the continuous response. For categorical and
survival responses the residual sum of squares is replaced by the deviance
``2 * negloglik`` (and ``log(RSS / n)`` by ``2 * negloglik / n``), and
cross-validation scores held-out negative log-likelihood.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import Continuous, Categorical, Dataset, DataError, Design, PenaltyParams, assemble_design
from .losses import CoxLoss, MultinomialLoss
from .solver import FitResult, SolverOptions, design_loss, fit, null_group_gradients

logger = logging.getLogger(__name__)

CRITERIA = ("cv", "gcv", "aic", "bic", "caic")


# ---------------------------------------------------------------------------
# cross-validation
# ---------------------------------------------------------------------------

def fold_assignment(n: int, folds: int, seed: int = 0) -> np.ndarray:
    """Fold label per observation; depends only on ``(n, folds, seed)``."""
    if folds < 2 or folds > n:
        raise ValueError(f"need 2 <= folds <= n, got {folds}")
    perm = np.random.default_rng(seed).permutation(n)
    labels = np.empty(n, dtype=int)
    labels[perm] = np.arange(n) % folds
    return labels


def heldout_loss(result: FitResult, test: Dataset) -> float:
    """Squared prediction error (continuous) or negative log-likelihood on ``test``."""
    design = result.design
    M = design.transform(test.covariates, test.treatment)
    theta = result.coefficients.to_vector()
    resp = test.response
    if isinstance(resp, Continuous):
        r = resp.y - design.y_mean - M @ theta
        return float(r @ r)
    if isinstance(resp, Categorical):
        return MultinomialLoss(M, resp.labels, resp.n_classes).value(theta)
    if resp.status.sum() == 0:
        raise DataError("validation fold has no events")
    return CoxLoss(M, resp.time, resp.status).value(theta)


class CrossValidation:
    """K-fold criterion with per-fold warm starts; also fits the full data."""

    def __init__(self, dataset: Dataset, folds: int = 5, seed: int = 0, lambda2: float = 0.0,
                 options: Optional[SolverOptions] = None, standardize: bool = True):
        self.labels = fold_assignment(dataset.n, folds, seed)
        self.folds = folds
        self.lambda2 = lambda2
        self.options = options
        self.full = assemble_design(dataset, standardize)
        self.train = []
        self.test = []
        for k in range(folds):
            self.train.append(assemble_design(dataset.subset(self.labels != k), standardize))
            self.test.append(dataset.subset(self.labels == k))

    def __call__(self, lam1, lam3, warm=None):
        penalty = PenaltyParams(lam1, self.lambda2, lam3)
        fold_warm, full_warm = warm if warm is not None else ([None] * self.folds, None)
        fits, total = [], 0.0
        for k in range(self.folds):
            res = fit(self.train[k], penalty, self.options, init=fold_warm[k])
            fits.append(res)
            total += heldout_loss(res, self.test[k])
        full = fit(self.full, penalty, self.options, init=full_warm)
        return total / self.folds, (fits, full), full


def cv_mse(dataset: Dataset, penalty: PenaltyParams, folds: int = 5, seed: int = 0,
           options: Optional[SolverOptions] = None) -> float:
    """Average over folds of the held-out squared error ``||y_k - yhat_(-k)||^2``."""
    cv = CrossValidation(dataset, folds, seed, penalty.lambda2, options)
    total = 0.0
    for k in range(folds):
        res = fit(cv.train[k], penalty, options)
        total += heldout_loss(res, cv.test[k])
    return total / folds


# ---------------------------------------------------------------------------
# information criteria
# ---------------------------------------------------------------------------

def _design_of(result: FitResult, data) -> Design:
    if data is None:
        return result.design
    return data if isinstance(data, Design) else assemble_design(data)


def residual_sum(result: FitResult, data=None) -> float:
    """RSS for a continuous response, deviance ``2 * negloglik`` otherwise."""
    design = _design_of(result, data)
    # the Gaussian loss is RSS / 2, the others are negative log-likelihoods
    return 2.0 * design_loss(design).value(result.coefficients.to_vector())


def effective_df(result: FitResult, data=None, penalty: Optional[PenaltyParams] = None) -> float:
    """Trace of the ridge-type hat matrix on the active columns.

    ``tr(XA (XA'XA + W)^-1 XA')`` with ``W`` zero for the treatment,
    ``lam1 / ||(b_j, g_j)|| + 2 lam2`` for an active beta and the same plus
    ``lam3 / |g_j|`` for an active gamma. Summed over outcome classes.
    """
    design = _design_of(result, data)
    penalty = result.penalty_params if penalty is None else penalty
    lam1, lam2, lam3 = penalty.lambda1, penalty.lambda2, penalty.lambda3
    M = design.matrix
    d = design.d
    df = 0.0
    for row in result.coefficients.to_matrix():
        beta, gamma = row[1:d + 1], row[d + 1:]
        norm = np.sqrt(beta ** 2 + gamma ** 2)
        active = row != 0
        active[0] = True
        w = np.zeros_like(row)
        safe = np.where(norm > 0, norm, 1.0)
        w[1:d + 1] = lam1 / safe + 2 * lam2
        w[d + 1:] = lam1 / safe + 2 * lam2 + lam3 / np.where(gamma != 0, np.abs(gamma), 1.0)
        XA = M[:, active]
        G = XA.T @ XA
        A = G + np.diag(w[active])
        try:
            df += float(np.trace(np.linalg.solve(A, G)))
        except np.linalg.LinAlgError:
            df += float(np.trace(np.linalg.pinv(A) @ G))
    return df


def gcv(result: FitResult, data=None, penalty: Optional[PenaltyParams] = None) -> float:
    design = _design_of(result, data)
    n = design.n
    df = effective_df(result, design, penalty)
    if df >= n:
        raise ValueError(f"saturated model: effective degrees of freedom {df:.3g} >= n = {n}")
    return residual_sum(result, design) / (n * (1.0 - df / n) ** 2)


def _log_fit_term(result, design):
    n = design.n
    if design.kind == "gaussian":
        rss = residual_sum(result, design)
        if rss <= 0:
            raise ValueError("zero residual sum of squares; log-criteria undefined")
        return math.log(rss / n)
    return residual_sum(result, design) / n


def aic(result: FitResult, data=None) -> float:
    design = _design_of(result, data)
    return _log_fit_term(result, design) + 2.0 * effective_df(result, design) / design.n


def bic(result: FitResult, data=None) -> float:
    design = _design_of(result, data)
    n = design.n
    return _log_fit_term(result, design) + math.log(n) * effective_df(result, design) / n


def caic(result: FitResult, data=None) -> float:
    """Small-sample corrected AIC with ``d`` the number of nonzero coefficients.

    ``(n/2) log(RSS) + (n/2) (1 + d/n) / (1 - (d + 2)/n)``.
    """
    design = _design_of(result, data)
    n = design.n
    k = float(np.count_nonzero(result.coefficients.to_vector()))
    denom = 1.0 - (k + 2.0) / n
    if denom <= 0:
        raise ValueError(f"too many nonzero coefficients ({int(k)}) for n = {n}")
    if design.kind == "gaussian":
        rss = residual_sum(result, design)
        if rss <= 0:
            raise ValueError("zero residual sum of squares; log-criteria undefined")
        fit_term = 0.5 * n * math.log(rss)
    else:
        fit_term = 0.5 * residual_sum(result, design)
    return fit_term + 0.5 * n * (1.0 + k / n) / denom


INFO_CRITERIA = {"gcv": gcv, "aic": aic, "bic": bic, "caic": caic}


class InformationCriterion:
    """In-sample criterion evaluated on a single full-data fit."""

    def __init__(self, dataset: Dataset, kind: str, lambda2: float = 0.0,
                 options: Optional[SolverOptions] = None, standardize: bool = True):
        self.score = INFO_CRITERIA[kind]
        self.design = assemble_design(dataset, standardize)
        self.lambda2 = lambda2
        self.options = options

    def __call__(self, lam1, lam3, warm=None):
        res = fit(self.design, PenaltyParams(lam1, self.lambda2, lam3), self.options, init=warm)
        return self.score(res), res, res


# ---------------------------------------------------------------------------
# greedy path
# ---------------------------------------------------------------------------

def initial_lambda(design: Design, c: float = 1.1) -> float:
    """Starting value ``lambda0`` for the path.

    ``c / s_min`` with ``s_min`` the smallest nonzero singular value of the
    model matrix; replaced by ``c`` times the largest null-model group
    gradient when more than one biomarker would already enter at ``lambda0``.
    """
    s = np.linalg.svd(design.matrix, compute_uv=False)
    nonzero = s[s > 1e-10 * s.max()]
    lam0 = c / nonzero.min() if nonzero.size and nonzero.min() >= 1e-10 else math.inf
    if not math.isfinite(lam0) or np.sum(null_group_gradients(design, lam0) > lam0) > 1:
        lam0 = c * float(null_group_gradients(design, 0.0).max())
    return lam0


@dataclass
class PathTrace:
    rows: list
    chosen: int
    lambda0: float
    delta: float
    fit: Optional[FitResult] = field(default=None, repr=False)
    evaluations: list = field(default_factory=list, repr=False)

    @property
    def lambda1(self) -> float:
        return self.rows[self.chosen]["lambda1"]

    @property
    def lambda3(self) -> float:
        return self.rows[self.chosen]["lambda3"]

    @property
    def criterion(self) -> float:
        return self.rows[self.chosen]["criterion"]

    COLUMNS = ("step", "lambda1", "lambda3", "criterion", "n_active_beta", "n_active_gamma")

    def write_csv(self, path, extra: Optional[dict] = None) -> None:
        cols = list(self.COLUMNS) + list(extra or {})
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for r in self.rows:
                vals = [r[c] for c in self.COLUMNS] + list((extra or {}).values())
                w.writerow([repr(v) if isinstance(v, float) else v for v in vals])


def _safe_eval(crit, lam1, lam3, warm):
    try:
        value, state, full = crit(lam1, lam3, warm)
        if not np.isfinite(value):
            value = math.inf
        return value, state, full
    except Exception as err:
        logger.info("criterion failed at lambda1=%.4g, lambda3=%.4g: %s", lam1, lam3, err)
        return math.inf, None, None


def _path_row(step, lam1, lam3, value, full):
    nb, ng = full.n_active() if full is not None else (0, 0)
    return {"step": step, "lambda1": lam1, "lambda3": lam3, "criterion": value,
            "n_active_beta": nb, "n_active_gamma": ng}


def make_criterion(dataset: Dataset, criterion: str, lambda2: float = 0.0, folds: int = 5,
                   seed: int = 0, options: Optional[SolverOptions] = None):
    if criterion == "cv":
        return CrossValidation(dataset, folds, seed, lambda2, options)
    if criterion in INFO_CRITERIA:
        return InformationCriterion(dataset, criterion, lambda2, options)
    raise ValueError(f"unknown criterion {criterion!r}; expected one of {CRITERIA}")


def greedy_search(dataset: Dataset, criterion="cv", delta: float = 0.9, max_steps: int = 20,
                  lambda2: float = 1e-6, folds: int = 5, seed: int = 0,
                  options: Optional[SolverOptions] = None, lambda0: Optional[float] = None,
                  c: float = 1.1, rtol: float = 1e-4) -> PathTrace:
    """Greedy downward search over ``(lambda1, lambda3)`` with damping ``delta``.

    At step ``k`` the three points ``c1 = c(lambda0 delta^(k+1), lambda0 delta^k)``,
    ``c2 = c(lambda0 delta^k, lambda0 delta^(k+1))`` and
    ``c3 = c(lambda0 delta^(k+1), lambda0 delta^(k+1))`` are scored, and the
    next pair is ``lambda1 = lambda0 delta^(k + I(min(c1, c3) <= c2))``,
    ``lambda3 = lambda0 delta^(k + I(min(c2, c3) < c1))``. The search stops
    when the criterion first increases or after ``max_steps`` steps, and
    returns the visited point with the smallest criterion.

    An increase counts only when it exceeds ``rtol * |criterion|``; near
    ``lambda0`` the criterion is flat up to solver and fold noise, and a
    literal comparison would end the search before any biomarker entered.

    ``criterion`` is a name from :data:`CRITERIA` or a callable
    ``(lam1, lam3, warm) -> (value, warm_state, full_fit)``.
    """
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    if max_steps < 1:
        raise ValueError("max_steps must be at least 1")
    crit = criterion
    if isinstance(criterion, str):
        crit = make_criterion(dataset, criterion, lambda2, folds, seed, options)
    if lambda0 is None:
        design = getattr(crit, "full", None) or getattr(crit, "design", None) or assemble_design(dataset)
        lambda0 = initial_lambda(design, c)

    def lam(e):
        return lambda0 * delta ** e

    value, warm, full = _safe_eval(crit, lam(0), lam(0), None)
    rows = [_path_row(0, lam(0), lam(0), value, full)]
    fits = [full]
    evaluations = [(lam(0), lam(0), value)]
    moves = {(1, 0): 0, (0, 1): 1, (1, 1): 2}
    for k in range(max_steps):
        cands = [(k + 1, k), (k, k + 1), (k + 1, k + 1)]
        outs = [_safe_eval(crit, lam(i), lam(j), warm) for i, j in cands]
        c1, c2, c3 = (o[0] for o in outs)
        evaluations.extend((lam(i), lam(j), o[0]) for (i, j), o in zip(cands, outs))
        i1 = int(min(c1, c3) <= c2)
        i3 = int(min(c2, c3) < c1)
        if i1 == i3 == 0:  # only reachable with non-finite values
            i1 = 1
        new_value, new_warm, new_full = outs[moves[(i1, i3)]]
        rows.append(_path_row(k + 1, lam(k + i1), lam(k + i3), new_value, new_full))
        fits.append(new_full)
        if new_warm is not None:
            warm = new_warm
        if new_value - value > rtol * abs(value):
            break
        value = new_value
    values = [r["criterion"] for r in rows]
    chosen = int(np.argmin(values))
    return PathTrace(rows, chosen, lambda0, delta, fits[chosen], evaluations)


def tune(dataset: Dataset, criterion="cv", deltas: Sequence[float] = (0.9,), **kwargs):
    """Run :func:`greedy_search` per damping ratio; return ``(best, all_traces)``."""
    traces = [greedy_search(dataset, criterion, delta=dl, **kwargs) for dl in deltas]
    best = min(range(len(traces)), key=lambda i: traces[i].criterion)
    return traces[best], traces
