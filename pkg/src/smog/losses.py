"""Negative log-likelihood losses and closed-form gradients.

Each loss works on a generic model matrix ``M`` (``n x p``) and a flat
parameter vector. For the multinomial loss the vector stacks the ``K - 1``
class blocks, each laid out like the columns of ``M``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .core import Categorical, Continuous, Coefficients, DataError, Design, Survival


class LossOverflowError(FloatingPointError):
    """Linear predictor too large to exponentiate."""


@dataclass
class LossEvaluation:
    value: float
    gradient: np.ndarray


class GaussianLoss:
    """``0.5 * ||y - M theta||^2``."""

    def __init__(self, M, y):
        self.M = np.asarray(M, dtype=float)
        self.y = np.asarray(y, dtype=float).ravel()
        if self.M.shape[0] != self.y.shape[0]:
            raise DataError("response length does not match model matrix")
        self.n, self.p = self.M.shape
        self.dim = self.p

    def _check(self, theta):
        if theta.shape[0] != self.dim:
            raise DataError(f"expected {self.dim} coefficients, got {theta.shape[0]}")

    def value(self, theta):
        self._check(theta)
        r = self.y - self.M @ theta
        return 0.5 * float(r @ r)

    def value_grad(self, theta):
        self._check(theta)
        r = self.y - self.M @ theta
        return 0.5 * float(r @ r), -(self.M.T @ r)

    def bregman(self, theta, step, f0, g):
        """``f(theta + step) - f(theta) - g' step``, free of cancellation."""
        ms = self.M @ step
        return 0.5 * float(ms @ ms)

    def predict(self, M, theta):
        return M @ theta


class MultinomialLoss:
    """Multinomial logistic negative log-likelihood with class ``K`` as pivot.

    ``labels`` are in ``1..K``; the log-partition uses log-sum-exp.
    """

    def __init__(self, M, labels, n_classes):
        self.M = np.asarray(M, dtype=float)
        labels = np.asarray(labels).ravel().astype(int)
        if labels.shape[0] != self.M.shape[0]:
            raise DataError("label length does not match model matrix")
        if labels.min() < 1 or labels.max() > n_classes:
            raise DataError(f"labels must lie in 1..{n_classes}")
        self.n, self.p = self.M.shape
        self.m = n_classes - 1
        self.dim = self.m * self.p
        self.onehot = np.zeros((self.n, self.m))
        rows = np.flatnonzero(labels <= self.m)
        self.onehot[rows, labels[rows] - 1] = 1.0

    def _psi(self, theta):
        if theta.shape[0] != self.dim:
            raise DataError(f"expected {self.dim} coefficients, got {theta.shape[0]}")
        psi = self.M @ theta.reshape(self.m, self.p).T
        return psi, logsumexp(np.column_stack([np.zeros(self.n), psi]), axis=1)

    def value(self, theta):
        psi, lse = self._psi(theta)
        return float(lse.sum() - (self.onehot * psi).sum())

    def value_grad(self, theta):
        psi, lse = self._psi(theta)
        prob = np.exp(psi - lse[:, None])
        grad = (prob - self.onehot).T @ self.M
        return float(lse.sum() - (self.onehot * psi).sum()), grad.ravel()

    def probabilities(self, M, theta):
        """``n x K`` class probabilities, pivot class last."""
        psi = M @ theta.reshape(self.m, -1).T
        full = np.column_stack([psi, np.zeros(M.shape[0])])
        return np.exp(full - logsumexp(full, axis=1)[:, None])


class CoxLoss:
    """Negative Cox partial log-likelihood with Efron tie correction.

    For each distinct event time with ``m`` tied events ``H`` and risk set
    ``R = {j : Y_j >= t}``, contributes
    ``sum_{l<m} log(S_R - l/m S_H) - sum_H psi``.
    """

    def __init__(self, M, time, status):
        self.M = np.asarray(M, dtype=float)
        time = np.asarray(time, dtype=float).ravel()
        status = np.asarray(status).ravel().astype(int)
        if time.shape[0] != self.M.shape[0] or status.shape != time.shape:
            raise DataError("survival response length does not match model matrix")
        if status.sum() == 0:
            raise DataError("all observations are censored; the partial likelihood is empty")
        self.n, self.p = self.M.shape
        self.dim = self.p
        order = np.argsort(time, kind="stable")
        self.order = order
        self.ts = time[order]
        self.ev = status[order].astype(bool)
        self.Ms = self.M[order]
        ev_times, ev_group, counts = np.unique(self.ts[self.ev], return_inverse=True,
                                               return_counts=True)
        self.event_times = ev_times
        self.counts = counts
        self.event_idx = np.flatnonzero(self.ev)
        self.event_group = ev_group
        # first sorted position with time >= event time (risk set start)
        self.risk_start = np.searchsorted(self.ts, ev_times, side="left")
        # one term per event: group index and fraction l/m
        self.term_group = np.repeat(np.arange(ev_times.size), counts)
        self.term_frac = np.concatenate([np.arange(c) / c for c in counts])
        # for each sorted obs, number of event times <= its time
        self.n_before = np.searchsorted(ev_times, self.ts, side="right")
        self.sum_event_x = self.Ms[self.event_idx].sum(axis=0)

    def _pieces(self, theta):
        if theta.shape[0] != self.dim:
            raise DataError(f"expected {self.dim} coefficients, got {theta.shape[0]}")
        with np.errstate(over="ignore", invalid="ignore"):
            psi = self.Ms @ theta
        if not np.all(np.isfinite(psi)):
            raise LossOverflowError("non-finite linear predictor; try standardizing covariates")
        shift = psi.max()
        phi = np.exp(psi - shift)
        rev = np.cumsum(phi[::-1])[::-1]
        s_risk = rev[self.risk_start]
        s_tie = np.bincount(self.event_group, weights=phi[self.event_idx],
                            minlength=self.event_times.size)
        denom = s_risk[self.term_group] - self.term_frac * s_tie[self.term_group]
        if not np.all(np.isfinite(denom)) or np.any(denom <= 0):
            raise LossOverflowError("degenerate risk-set sum; try standardizing covariates")
        value = float(np.log(denom).sum() + shift * denom.size - psi[self.event_idx].sum())
        return psi, phi, denom, value

    def value(self, theta):
        return self._pieces(theta)[3]

    def value_grad(self, theta):
        psi, phi, denom, value = self._pieces(theta)
        ng = self.event_times.size
        inv = 1.0 / denom
        a = np.bincount(self.term_group, weights=inv, minlength=ng)
        b = np.bincount(self.term_group, weights=self.term_frac * inv, minlength=ng)
        cum_a = np.concatenate([[0.0], np.cumsum(a)])
        weight = phi * cum_a[self.n_before]
        weight[self.event_idx] -= phi[self.event_idx] * b[self.event_group]
        grad = self.Ms.T @ weight - self.sum_event_x
        return value, grad


def make_loss(design: Design, M=None):
    """Loss object for the design's response type, on ``M`` (default: the design matrix)."""
    M = design.matrix if M is None else M
    resp = design.response
    if isinstance(resp, Continuous):
        return GaussianLoss(M, resp.y)
    if isinstance(resp, Categorical):
        return MultinomialLoss(M, resp.labels, resp.n_classes)
    if isinstance(resp, Survival):
        return CoxLoss(M, resp.time, resp.status)
    raise TypeError(f"unsupported response {type(resp).__name__}")


def _evaluate(loss, coef):
    value, grad = loss.value_grad(coef.to_vector())
    return LossEvaluation(value, grad)


def gaussian_loss(design: Design, y, coef: Coefficients) -> LossEvaluation:
    return _evaluate(GaussianLoss(design.matrix, y), coef)


def multinomial_loss(design: Design, labels, coef: Coefficients, n_classes=None) -> LossEvaluation:
    n_classes = coef.n_classes + 1 if n_classes is None else n_classes
    return _evaluate(MultinomialLoss(design.matrix, labels, n_classes), coef)


def cox_loss(design: Design, time, status, coef: Coefficients) -> LossEvaluation:
    return _evaluate(CoxLoss(design.matrix, time, status), coef)
