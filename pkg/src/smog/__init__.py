"""Sparse regression with hierarchical prognostic/predictive structure.

Biomarker ``j`` enters a treatment model through a prognostic coefficient
``beta_j`` and a predictive (treatment interaction) coefficient ``gamma_j``.
An overlapped group penalty guarantees that ``gamma_j`` is nonzero only when
``beta_j`` is, and the penalized problem is solved by MM-ADMM.
"""

from .core import (Categorical, Coefficients, Continuous, DataError, Dataset, Design,
                   PenaltyParams, Survival, assemble_design, hierarchy_satisfied,
                   linear_predictor, read_csv, write_csv)
from .losses import cox_loss, gaussian_loss, make_loss, multinomial_loss
from .prox import prox_full, prox_pair, soft_threshold
from .solver import FitResult, NonConvergenceError, SolverOptions, fit, kkt_residual, predict_linear
from .selection import aic, bic, caic, cv_mse, gcv, greedy_search, tune
from .simulate import Scenario, evaluate, generate, run_study
from .analysis import dichotomize, relaxed_refit, treatment_contrast

__version__ = "0.1.0"
