"""MM-ADMM minimization of ``f(theta) + penalty(theta)``.

Each iteration takes one majorization-minimization step on the smooth loss
(quadratic upper bound with a backtracked Lipschitz estimate), one proximal
``z``-update, and a scaled dual update ``u += theta - z``. Reported
coefficients are the sparse ``z`` iterate.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import Coefficients, Dataset, Design, PenaltyParams, assemble_design
from .losses import make_loss
from .prox import penalty_value, prox_blocks

logger = logging.getLogger(__name__)

L_MAX = 1e30


class NonConvergenceError(RuntimeError):
    """Backtracking could not find a valid majorizer."""


@dataclass(frozen=True)
class SolverOptions:
    rho: Optional[float] = None  # overrides PenaltyParams.rho when set
    eps_abs: float = 1e-5
    eps_rel: float = 1e-5
    alpha: float = 2.0
    L0: float = 1.0
    max_iter: int = 5000
    record_history: bool = False

    def __post_init__(self):
        if self.alpha <= 1:
            raise ValueError("alpha must exceed 1")
        if self.L0 <= 0 or self.eps_abs <= 0 or self.eps_rel < 0 or self.max_iter < 1:
            raise ValueError("L0, eps_abs and max_iter must be positive, eps_rel nonnegative")
        if self.rho is not None and self.rho <= 0:
            raise ValueError("rho must be positive")


@dataclass
class ADMMState:
    theta: np.ndarray
    z: np.ndarray
    u: np.ndarray
    L: float = 1.0
    iteration: int = 0
    primal_residual: float = np.inf
    dual_residual: float = np.inf


@dataclass
class FitResult:
    coefficients: Coefficients
    converged: bool
    iterations: int
    primal_residual: float
    dual_residual: float
    primal_tol: float
    dual_tol: float
    loss: float
    penalty: float
    penalty_params: PenaltyParams
    rho: float
    state: ADMMState
    z_prev: np.ndarray
    design: Optional[Design] = field(default=None, repr=False)
    mask: Optional[np.ndarray] = field(default=None, repr=False)
    history: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def objective(self) -> float:
        return self.loss + self.penalty

    def n_active(self):
        """Counts of nonzero (beta, gamma) entries."""
        b, g = self.coefficients.support()
        return int(b.sum()), int(g.sum())


def residuals(theta, z, z_prev, u, n, rho, eps_abs, eps_rel):
    """Primal/dual residuals and their tolerances, all divided by ``sqrt(2 p)``."""
    p = theta.shape[0]
    root = np.sqrt(2.0 * p)
    r_pri = np.linalg.norm(theta - z) / root
    r_dual = np.linalg.norm(z - z_prev) / root
    tol_pri = eps_abs + eps_rel * max(np.linalg.norm(theta), np.linalg.norm(z)) / root
    tol_dual = np.sqrt(n / p) * eps_abs / rho + eps_rel * np.linalg.norm(u) / root
    return r_pri, r_dual, tol_pri, tol_dual


def majorize_step(loss, state: ADMMState, rho: float, alpha: float = 2.0, L0: float = 1.0,
                  fg=None):
    """One MM step on ``f`` with backtracking on the Lipschitz estimate.

    Starts from ``max(L0, state.L / alpha)`` and multiplies by ``alpha`` until
    ``f(theta_new) <= Q(theta_new | theta)``. Returns ``(theta_new, L)``.

    The check is made on the gap ``f(theta_new) - f(theta) - g' step``, exact
    for losses providing ``bregman``. Otherwise a step whose curvature term is
    below the rounding level of ``f`` says nothing about ``L``, and the
    previous estimate is kept rather than lowered.
    """
    theta = state.theta
    f0, g = loss.value_grad(theta) if fg is None else fg
    anchor = rho * (state.z - state.u)
    exact = hasattr(loss, "bregman")
    slack = 0.0 if exact else 1e-12 * max(1.0, abs(f0))
    L = max(L0, state.L / alpha)
    while True:
        theta_new = (L * theta - g + anchor) / (L + rho)
        step = theta_new - theta
        curv = 0.5 * L * (step @ step)
        try:
            if exact:
                gap = loss.bregman(theta, step, f0, g)
            else:
                gap = loss.value(theta_new) - f0 - g @ step
            ok = gap <= curv + slack
        except FloatingPointError:
            ok = False  # trial point overflowed; a larger L shortens the step
        if ok and not exact and curv < slack and L < state.L:
            L = state.L  # uninformative test: keep the last estimate
            continue
        if ok:
            return theta_new, L
        L *= alpha
        if L > L_MAX:
            raise NonConvergenceError("Lipschitz backtracking exceeded 1e30; the gradient may be wrong")


def z_update(theta_next, u, penalty: PenaltyParams, d: int, rho: float, mask=None):
    """``prox(theta_next + u)`` with penalty weights divided by ``rho``."""
    z = prox_blocks(theta_next + u, d, penalty.lambda1 / rho, penalty.lambda2 / rho,
                    penalty.lambda3 / rho)
    if mask is not None:
        z[~mask] = 0.0
    return z


RHO_SCALE = {"gaussian": 1.0, "multinomial": 0.25, "cox": 1.0}


def default_rho(design: Design) -> float:
    """ADMM penalty matched to the loss curvature: ``n`` times the per-row Hessian bound."""
    return RHO_SCALE[design.kind] * design.n


def resolve_rho(design: Design, penalty: PenaltyParams, options: Optional[SolverOptions] = None):
    if options is not None and options.rho is not None:
        return options.rho
    if penalty.rho is not None:
        return penalty.rho
    return default_rho(design)


def _as_design(data, standardize=True) -> Design:
    return data if isinstance(data, Design) else assemble_design(data, standardize)


def design_loss(design: Design):
    """Loss object for ``design``, cached on the (immutable) design."""
    loss = design.__dict__.get("_loss")
    if loss is None:
        loss = make_loss(design)
        object.__setattr__(design, "_loss", loss)
    return loss


def fit(data, penalty: PenaltyParams, options: Optional[SolverOptions] = None,
        init=None, mask=None, standardize: bool = True) -> FitResult:
    """Minimize the penalized loss for a :class:`Dataset` or prepared :class:`Design`.

    Parameters
    ----------
    init : FitResult or ADMMState, optional
        Warm start; ``theta``, ``z``, ``u`` and the Lipschitz estimate are copied.
    mask : bool array over all coefficients, optional
        Coordinates set to False are held at exactly zero.
    """
    options = options or SolverOptions()
    design = _as_design(data, standardize)
    loss = design_loss(design)
    d, n, dim = design.d, design.n, loss.dim
    rho = resolve_rho(design, penalty, options)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool).ravel()
        if mask.shape[0] != dim:
            raise ValueError(f"mask must have {dim} entries")

    if init is None:
        state = ADMMState(np.zeros(dim), np.zeros(dim), np.zeros(dim), options.L0)
    else:
        src = init.state if isinstance(init, FitResult) else init
        if src.theta.shape[0] != dim:
            raise ValueError("warm start has the wrong dimension")
        state = ADMMState(src.theta.copy(), src.z.copy(), src.u.copy(), src.L)
    if mask is not None:
        for v in (state.theta, state.z, state.u):
            v[~mask] = 0.0

    history = [] if options.record_history else None
    converged = False
    z_prev = state.z
    tol_pri = tol_dual = np.inf
    for k in range(options.max_iter):
        theta_new, L = majorize_step(loss, state, rho, options.alpha, options.L0)
        if mask is not None:
            theta_new[~mask] = 0.0
        z_new = z_update(theta_new, state.u, penalty, d, rho, mask)
        u_new = state.u + theta_new - z_new
        r_pri, r_dual, tol_pri, tol_dual = residuals(theta_new, z_new, state.z, u_new, n, rho,
                                                     options.eps_abs, options.eps_rel)
        z_prev = state.z
        state = ADMMState(theta_new, z_new, u_new, L, k + 1, r_pri, r_dual)
        if history is not None:
            history.append(loss.value(z_new) + penalty_value(z_new, d, penalty.lambda1,
                                                             penalty.lambda2, penalty.lambda3))
        if r_pri <= tol_pri and r_dual <= tol_dual:
            converged = True
            break
    if not converged:
        logger.warning("MM-ADMM stopped at max_iter=%d (primal %.3g, dual %.3g)",
                       options.max_iter, state.primal_residual, state.dual_residual)

    z = state.z
    return FitResult(
        coefficients=Coefficients.from_vector(z, d),
        converged=converged,
        iterations=state.iteration,
        primal_residual=state.primal_residual,
        dual_residual=state.dual_residual,
        primal_tol=tol_pri,
        dual_tol=tol_dual,
        loss=loss.value(z),
        penalty=penalty_value(z, d, penalty.lambda1, penalty.lambda2, penalty.lambda3),
        penalty_params=penalty,
        rho=rho,
        state=state,
        z_prev=z_prev,
        design=design,
        mask=mask,
        history=None if history is None else np.asarray(history),
    )


def kkt_residual(result: FitResult, data=None, penalty: Optional[PenaltyParams] = None) -> float:
    """Largest subgradient-optimality violation at the reported coefficients.

    Active coordinates contribute ``|grad f + grad penalty|``; a zero group
    contributes ``(||(g_beta, soft(g_gamma, lam3))|| - lam1)+``; a zero gamma in
    an active group contributes ``(|g_gamma| - lam3)+``. The treatment
    coordinate is unpenalized.
    """
    design = result.design if data is None else _as_design(data)
    penalty = result.penalty_params if penalty is None else penalty
    lam1, lam2, lam3 = penalty.lambda1, penalty.lambda2, penalty.lambda3
    loss = design_loss(design)
    d = design.d
    z = result.state.z
    g = loss.value_grad(z)[1].reshape(-1, 2 * d + 1)
    zm = z.reshape(-1, 2 * d + 1)
    beta, gamma = zm[:, 1:d + 1], zm[:, d + 1:]
    gb, gg = g[:, 1:d + 1], g[:, d + 1:]
    mask = None if result.mask is None else result.mask.reshape(-1, 2 * d + 1)
    if mask is not None:
        # fixed-zero coordinates carry no optimality condition
        gb = np.where(mask[:, 1:d + 1], gb, 0.0)
        gg = np.where(mask[:, d + 1:], gg, 0.0)

    norm = np.sqrt(beta ** 2 + gamma ** 2)
    active = norm > 0
    safe = np.where(active, norm, 1.0)
    viol_b = np.abs(gb + lam1 * beta / safe + 2 * lam2 * beta)
    gamma_on = gamma != 0
    viol_g_on = np.abs(gg + lam1 * gamma / safe + 2 * lam2 * gamma + lam3 * np.sign(gamma))
    viol_g_off = np.maximum(np.abs(gg) - lam3, 0.0)
    viol_g = np.where(gamma_on, viol_g_on, viol_g_off)
    soft = np.sign(gg) * np.maximum(np.abs(gg) - lam3, 0.0)
    viol_group = np.maximum(np.sqrt(gb ** 2 + soft ** 2) - lam1, 0.0)

    v_tau = np.abs(g[:, 0])
    v_beta = np.where(active, viol_b, viol_group)
    v_gamma = np.where(active, viol_g, 0.0)
    if mask is not None:
        v_tau = np.where(mask[:, 0], v_tau, 0.0)
        v_beta = np.where(mask[:, 1:d + 1], v_beta, 0.0)
        v_gamma = np.where(mask[:, d + 1:], v_gamma, 0.0)
    return float(max(v_tau.max(), v_beta.max(), v_gamma.max()))


def predict_linear(result: FitResult, covariates, treatment) -> np.ndarray:
    """Linear predictor ``n x m`` for new raw covariates, using the fit's standardization."""
    M = result.design.transform(covariates, treatment)
    theta = result.coefficients.to_matrix()
    return M @ theta.T


def null_group_gradients(design: Design, lambda3: float = 0.0) -> np.ndarray:
    """Per-biomarker norms ``||(g_beta, soft(g_gamma, lam3))||`` at the treatment-only fit.

    Any ``lambda1`` at or above the maximum keeps every biomarker out of the model.
    """
    loss = design_loss(design)
    d = design.d
    m = design.n_classes
    # treatment-only optimum by Newton iterations on the tau block(s)
    tau_mask = np.zeros(m * (2 * d + 1), dtype=bool)
    tau_mask[::2 * d + 1] = True
    theta = np.zeros(tau_mask.size)
    for _ in range(100):
        g = loss.value_grad(theta)[1]
        gt = g[tau_mask]
        if np.max(np.abs(gt)) < 1e-10 * max(1.0, design.n):
            break
        # finite-difference Hessian on the m treatment coefficients
        H = np.empty((m, m))
        h = 1e-6
        idx = np.flatnonzero(tau_mask)
        for a, ia in enumerate(idx):
            e = np.zeros_like(theta)
            e[ia] = h
            H[:, a] = (loss.value_grad(theta + e)[1][tau_mask] - loss.value_grad(theta - e)[1][tau_mask]) / (2 * h)
        step = np.linalg.solve(H + 1e-12 * np.eye(m), gt)
        theta[tau_mask] -= step
    g = loss.value_grad(theta)[1].reshape(m, 2 * d + 1)
    gb, gg = g[:, 1:d + 1], g[:, d + 1:]
    soft = np.sign(gg) * np.maximum(np.abs(gg) - lambda3, 0.0)
    return np.sqrt(gb ** 2 + soft ** 2).max(axis=0)
