"""Downstream subgroup analysis of a fitted model.

The treatment contrast of subject ``i`` is ``z_i = sum_j x_ij gamma_j`` over the
predictive coefficients. Subjects with ``z_i < 0`` form the biomarker-positive
group and the rest the biomarker-negative group. Within each group the
treatment effect on survival is summarized by an unpenalized Cox fit on the
treatment indicator alone, reported as a hazard ratio with a Wald interval.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .core import Dataset, Design, PenaltyParams, Survival
from .solver import FitResult, SolverOptions, fit

POSITIVE = "positive"
NEGATIVE = "negative"
RELAXED_LAMBDA = 1e-6


def standardize_covariates(design: Design, covariates) -> np.ndarray:
    """Raw covariates on the scale used by ``design``."""
    X = np.atleast_2d(np.asarray(covariates, dtype=float))
    if X.shape[1] != design.d:
        raise ValueError(f"expected {design.d} covariate columns, got {X.shape[1]}")
    return (X - design.x_mean) / design.x_scale


def treatment_contrast(coef, X) -> np.ndarray:
    """Per-subject treatment contrast ``X @ gamma`` (first outcome class).

    ``X`` must already be standardized like the fit (see
    :func:`standardize_covariates`).
    """
    gamma = coef.gamma[0]
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != gamma.shape[0]:
        raise ValueError(f"X has {X.shape[1]} columns but the fit has {gamma.shape[0]} biomarkers")
    return X @ gamma


def dichotomize(z, threshold: float = 0.0) -> np.ndarray:
    """Label ``positive`` where ``z < threshold`` and ``negative`` otherwise."""
    z = np.asarray(z, dtype=float)
    return np.where(z < threshold, POSITIVE, NEGATIVE)


def _as_mask(support, d: int) -> np.ndarray:
    support = np.asarray(support)
    if support.dtype == bool:
        if support.shape != (d,):
            raise ValueError(f"boolean support must have {d} entries")
        return support.copy()
    mask = np.zeros(d, dtype=bool)
    idx = support.astype(int).ravel()
    if idx.size and (idx.min() < 0 or idx.max() >= d):
        raise ValueError("support index out of range")
    mask[idx] = True
    return mask


def relaxed_refit(data, beta_support, gamma_support=(), options: Optional[SolverOptions] = None
                  ) -> FitResult:
    """Refit on a selected support with near-zero penalties.

    Coordinates outside ``(beta_support, gamma_support)`` are held at zero;
    the lasso and interaction penalties are set to ``1e-6`` and the ridge to
    zero. Supports are index lists or boolean masks over the biomarkers.
    """
    d = data.d
    b = _as_mask(beta_support, d)
    g = _as_mask(gamma_support, d)
    if np.any(g & ~b):
        bad = np.flatnonzero(g & ~b)
        raise ValueError(f"invalid hierarchy support: predictive {bad.tolist()} lack a prognostic term")
    if not b.any():
        raise ValueError("support is empty")
    block = np.concatenate([[True], b, g])
    n_classes = data.n_classes if isinstance(data, Design) else _n_classes(data)
    mask = np.tile(block, n_classes)
    penalty = PenaltyParams(RELAXED_LAMBDA, 0.0, RELAXED_LAMBDA)
    return fit(data, penalty, options, mask=mask)


def _n_classes(dataset: Dataset) -> int:
    k = getattr(dataset.response, "n_classes", None)
    return 1 if k is None else k - 1


@dataclass
class GroupSummary:
    group: str
    n: int
    n_treated: int
    events: Optional[int] = None
    hazard_ratio: Optional[float] = None
    ci_lower: Optional[float] = None
    ci_upper: Optional[float] = None


def treatment_hazard_ratio(time, status, treatment):
    """Hazard ratio of treated (``+1``) against control (``-1``) with a 95% Wald interval.

    Fits a single-covariate Cox model with Efron ties. Returns NaNs when the
    group has no events or only one arm.
    """
    from statsmodels.duration.hazard_regression import PHReg

    time = np.asarray(time, dtype=float)
    status = np.asarray(status, dtype=float)
    arm = (np.asarray(treatment) > 0).astype(float)
    if status.sum() == 0 or arm.min() == arm.max():
        return math.nan, math.nan, math.nan
    res = PHReg(time, arm[:, None], status=status, ties="efron").fit()
    b, se = float(res.params[0]), float(res.bse[0])
    return math.exp(b), math.exp(b - 1.959963984540054 * se), math.exp(b + 1.959963984540054 * se)


def subgroup_summary(dataset: Dataset, labels) -> list:
    """Per-group sizes and, for survival responses, the treatment hazard ratio."""
    labels = np.asarray(labels)
    out = []
    for grp in (POSITIVE, NEGATIVE):
        idx = np.flatnonzero(labels == grp)
        s = GroupSummary(grp, int(idx.size), int(np.sum(dataset.treatment[idx] > 0)))
        resp = dataset.response
        if isinstance(resp, Survival):
            s.events = int(resp.status[idx].sum())
            if idx.size:
                s.hazard_ratio, s.ci_lower, s.ci_upper = treatment_hazard_ratio(
                    resp.time[idx], resp.status[idx], dataset.treatment[idx])
        out.append(s)
    return out


def survival_table(dataset: Dataset, labels) -> list:
    """Kaplan-Meier estimates per (group, arm) as plot-ready rows."""
    from statsmodels.duration.survfunc import SurvfuncRight

    resp = dataset.response
    if not isinstance(resp, Survival):
        raise ValueError("survival table needs a survival response")
    labels = np.asarray(labels)
    rows = []
    for grp in (POSITIVE, NEGATIVE):
        for arm, sign in (("treated", 1), ("control", -1)):
            idx = np.flatnonzero((labels == grp) & (dataset.treatment == sign))
            if idx.size == 0:
                continue
            sf = SurvfuncRight(resp.time[idx], resp.status[idx])
            for t, r, e, s in zip(sf.surv_times, sf.n_risk, sf.n_events, sf.surv_prob):
                rows.append({"group": grp, "arm": arm, "time": float(t), "n_risk": int(r),
                             "n_event": int(e), "survival": float(s)})
    return rows


def _clean(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def write_subgroups(csv_path, json_path, z, labels, summary, ids=None) -> None:
    """Write per-subject ``(id, z, group)`` rows and the per-group summary JSON."""
    ids = np.arange(1, len(z) + 1) if ids is None else ids
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subject", "z", "group"])
        for i, zi, g in zip(ids, z, labels):
            w.writerow([i, repr(float(zi)), g])
    if json_path is not None:
        doc = {"schema": "smog/1",
               "groups": [{k: _clean(v) for k, v in asdict(s).items()} for s in summary]}
        with open(json_path, "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
