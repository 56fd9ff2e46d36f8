"""Closed-form proximal map of the hierarchical overlapped-group penalty.

For one biomarker the penalty on its (prognostic, predictive) pair ``(a, c)`` is

    lam1 * ||(a, c)||_2 + lam2 * ||(a, c)||_2^2 + lam3 * |c|

The proximal point is a group-lasso shrink of ``(b1, soft(b2, lam3))`` followed
by ridge scaling, so the predictive coordinate can only survive together with
the prognostic one.
"""

import numpy as np

TINY = np.finfo(float).smallest_subnormal


def soft_threshold(x, lam):
    """``sign(x) * max(|x| - lam, 0)``, elementwise."""
    x = np.asarray(x, dtype=float)
    out = np.sign(x) * np.maximum(np.abs(x) - lam, 0.0)
    return float(out) if out.ndim == 0 else out


def prox_pair(b1, b2, lam1, lam2, lam3):
    """Proximal point for ``(b1, b2)`` (scalars or equal-shape arrays).

    Returns exact zeros when ``||(b1, soft(b2, lam3))|| <= lam1``.
    """
    b1 = np.asarray(b1, dtype=float)
    s = np.sign(b2) * np.maximum(np.abs(b2) - lam3, 0.0)
    norm = np.sqrt(b1 * b1 + s * s)
    with np.errstate(divide="ignore", invalid="ignore"):
        shrink = np.where(norm > lam1, 1.0 - lam1 / norm, 0.0)
    shrink = shrink / (1.0 + 2.0 * lam2)
    t1, t2 = shrink * b1, shrink * s
    # a subnormal b1 can underflow to zero while t2 survives; keep the sign bit
    lost = (t1 == 0) & (b1 != 0) & (t2 != 0)
    if np.any(lost):
        t1 = np.where(lost, np.copysign(TINY, b1), t1)
    if t1.ndim == 0:
        return float(t1), float(t2)
    return t1, t2


def prox_blocks(theta, d, lam1, lam2, lam3, out=None):
    """Apply the proximal map to a flat vector of ``(tau, beta, gamma)`` blocks.

    ``theta`` may hold several class blocks of length ``2 d + 1`` back to back;
    ``tau`` entries pass through unchanged.
    """
    mat = np.asarray(theta, dtype=float).reshape(-1, 2 * d + 1)
    res = np.empty_like(mat) if out is None else out.reshape(-1, 2 * d + 1)
    res[:, 0] = mat[:, 0]
    res[:, 1:d + 1], res[:, d + 1:] = prox_pair(mat[:, 1:d + 1], mat[:, d + 1:],
                                                lam1, lam2, lam3)
    return res.reshape(-1)


def prox_full(b, lam1, lam2, lam3):
    """Proximal point of a ``(2 d + 1)``-vector, returned as :class:`Coefficients`."""
    from .core import Coefficients

    b = np.asarray(b, dtype=float).ravel()
    if b.shape[0] % 2 != 1:
        raise ValueError("expected a vector of length 2 d + 1")
    d = (b.shape[0] - 1) // 2
    return Coefficients.from_vector(prox_blocks(b, d, lam1, lam2, lam3), d)


def penalty_value(theta, d, lam1, lam2, lam3):
    mat = np.asarray(theta, dtype=float).reshape(-1, 2 * d + 1)
    beta, gamma = mat[:, 1:d + 1], mat[:, d + 1:]
    sq = beta * beta + gamma * gamma
    return float(lam1 * np.sqrt(sq).sum() + lam2 * sq.sum() + lam3 * np.abs(gamma).sum())
