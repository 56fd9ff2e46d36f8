"""Data model: datasets, the assembled design, coefficient containers.

The model matrix is ``[t, X, W]`` with ``W = X * t[:, None]`` and no intercept
column, so a single-class coefficient vector has length ``p = 2 d + 1`` laid out
as ``(tau, beta_1..beta_d, gamma_1..gamma_d)``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np


class DataError(ValueError):
    """Invalid input data (bad shapes, missing values, degenerate columns).

    ``column`` names the offending input column when there is one.
    """

    def __init__(self, message, column: Optional[str] = None):
        super().__init__(message)
        self.column = column


# ---------------------------------------------------------------------------
# responses
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Continuous:
    y: np.ndarray

    kind = "gaussian"

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).ravel()
        if not np.all(np.isfinite(y)):
            raise DataError("continuous response contains missing or non-finite values")
        object.__setattr__(self, "y", y)

    def __len__(self):
        return self.y.shape[0]

    def subset(self, idx):
        return Continuous(self.y[idx])


@dataclass(frozen=True)
class Categorical:
    """Class labels in ``1..n_classes``; the last class is the pivot."""

    labels: np.ndarray
    n_classes: Optional[int] = None

    kind = "multinomial"

    def __post_init__(self):
        raw = np.asarray(self.labels).ravel()
        if raw.dtype.kind == "f":
            if not np.all(np.isfinite(raw)) or np.any(raw != np.round(raw)):
                raise DataError("categorical labels must be integers")
        labels = raw.astype(int)
        k = int(labels.max()) if self.n_classes is None else int(self.n_classes)
        if k < 2:
            raise DataError("categorical response needs at least 2 classes")
        if labels.min() < 1 or labels.max() > k:
            raise DataError(f"labels must lie in 1..{k}")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "n_classes", k)

    def __len__(self):
        return self.labels.shape[0]

    def subset(self, idx):
        return Categorical(self.labels[idx], self.n_classes)


@dataclass(frozen=True)
class Survival:
    """Right-censored times; ``status`` is 1 for an observed event, 0 if censored."""

    time: np.ndarray
    status: np.ndarray

    kind = "cox"

    def __post_init__(self):
        time = np.asarray(self.time, dtype=float).ravel()
        status = np.asarray(self.status, dtype=float).ravel()
        if time.shape != status.shape:
            raise DataError("time and status lengths differ")
        if not (np.all(np.isfinite(time)) and np.all(np.isfinite(status))):
            raise DataError("survival response contains missing values")
        if np.any(time <= 0):
            raise DataError("survival times must be strictly positive")
        if not np.all(np.isin(status, (0, 1))):
            raise DataError("status must be 0 (censored) or 1 (event)")
        if time.size and status.sum() == 0:
            raise DataError("survival response has no events")
        object.__setattr__(self, "time", time)
        object.__setattr__(self, "status", status.astype(int))

    def __len__(self):
        return self.time.shape[0]

    def subset(self, idx):
        return Survival(self.time[idx], self.status[idx])


Response = Union[Continuous, Categorical, Survival]


# ---------------------------------------------------------------------------
# dataset
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Dataset:
    """Response, treatment in {-1, +1} and an ``n x d`` covariate matrix.

    Treatment given as {0, 1} is remapped to {-1, +1} with a warning.
    """

    response: Response
    treatment: np.ndarray
    covariates: np.ndarray
    names: Optional[Sequence[str]] = None

    def __post_init__(self):
        X = np.asarray(self.covariates, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2:
            raise DataError("covariates must be a 2-d array")
        t = np.asarray(self.treatment, dtype=float).ravel()
        n, d = X.shape
        if n < 2 or d < 1:
            raise DataError(f"need n >= 2 and d >= 1, got n={n}, d={d}")
        if not np.all(np.isfinite(X)):
            raise DataError("covariates contain missing or non-finite values")
        if not np.all(np.isfinite(t)):
            raise DataError("treatment contains missing values")
        if t.shape[0] != n or len(self.response) != n:
            raise DataError("response, treatment and covariates must have the same length")
        values = set(np.unique(t).tolist())
        if not values <= {-1.0, 1.0}:
            if values <= {0.0, 1.0}:
                warnings.warn("treatment coded as {0, 1}; remapping to {-1, +1}", stacklevel=3)
                t = 2.0 * t - 1.0
            else:
                raise DataError("treatment entries must be -1 or +1")
        names = list(self.names) if self.names is not None else [f"x{j + 1}" for j in range(d)]
        if len(names) != d:
            raise DataError("number of covariate names does not match covariate columns")
        object.__setattr__(self, "covariates", X)
        object.__setattr__(self, "treatment", t)
        object.__setattr__(self, "names", tuple(names))

    @property
    def n(self) -> int:
        return self.covariates.shape[0]

    @property
    def d(self) -> int:
        return self.covariates.shape[1]

    @property
    def kind(self) -> str:
        return self.response.kind

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.response.subset(idx), self.treatment[idx],
                       self.covariates[idx], self.names)


# ---------------------------------------------------------------------------
# coefficients and penalties
# ---------------------------------------------------------------------------

@dataclass
class Coefficients:
    """Treatment, prognostic and predictive effects.

    Stored per outcome class: ``tau`` has shape ``(m,)`` and ``beta``/``gamma``
    shape ``(m, d)``, with ``m = K - 1`` for a K-class response and 1 otherwise.
    One-dimensional inputs are promoted.
    """

    tau: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        self.tau = np.atleast_1d(np.asarray(self.tau, dtype=float)).ravel()
        self.beta = np.atleast_2d(np.asarray(self.beta, dtype=float))
        self.gamma = np.atleast_2d(np.asarray(self.gamma, dtype=float))
        if self.beta.shape != self.gamma.shape or self.beta.shape[0] != self.tau.shape[0]:
            raise DataError("inconsistent coefficient shapes")

    @property
    def n_classes(self) -> int:
        return self.tau.shape[0]

    @property
    def d(self) -> int:
        return self.beta.shape[1]

    def to_matrix(self) -> np.ndarray:
        """Rows are classes, columns ``(tau, beta, gamma)``."""
        return np.column_stack([self.tau, self.beta, self.gamma])

    def to_vector(self) -> np.ndarray:
        return self.to_matrix().ravel()

    @classmethod
    def from_vector(cls, theta, d: int) -> "Coefficients":
        mat = np.asarray(theta, dtype=float).reshape(-1, 2 * d + 1)
        return cls(mat[:, 0], mat[:, 1:d + 1], mat[:, d + 1:])

    @classmethod
    def zeros(cls, d: int, n_classes: int = 1) -> "Coefficients":
        return cls(np.zeros(n_classes), np.zeros((n_classes, d)), np.zeros((n_classes, d)))

    def support(self):
        """Boolean ``(beta != 0, gamma != 0)`` masks of shape ``(m, d)``."""
        return self.beta != 0, self.gamma != 0


def hierarchy_satisfied(coef: Coefficients) -> bool:
    """True iff every nonzero gamma has a nonzero beta (exact comparison)."""
    beta_on, gamma_on = coef.support()
    return bool(np.all(beta_on | ~gamma_on))


@dataclass(frozen=True)
class PenaltyParams:
    """Penalty weights; ``rho=None`` lets the solver pick a curvature-scaled value."""

    lambda1: float = 0.0
    lambda2: float = 0.0
    lambda3: float = 0.0
    rho: Optional[float] = None

    def __post_init__(self):
        for name in ("lambda1", "lambda2", "lambda3"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and nonnegative, got {v}")
        if self.rho is not None and (not np.isfinite(self.rho) or self.rho <= 0):
            raise ValueError(f"rho must be positive, got {self.rho}")

    def penalty(self, coef: Coefficients) -> float:
        """Value of the composite penalty (tau is unpenalized)."""
        sq = coef.beta ** 2 + coef.gamma ** 2
        return float(self.lambda1 * np.sqrt(sq).sum() + self.lambda2 * sq.sum()
                     + self.lambda3 * np.abs(coef.gamma).sum())


# ---------------------------------------------------------------------------
# design
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Design:
    """Assembled model matrix plus the transform used to build it."""

    t: np.ndarray
    X: np.ndarray
    W: np.ndarray
    response: Response
    x_mean: np.ndarray
    x_scale: np.ndarray
    y_mean: float = 0.0
    names: tuple = field(default_factory=tuple)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def p(self) -> int:
        return 2 * self.d + 1

    @property
    def n_classes(self) -> int:
        if isinstance(self.response, Categorical):
            return self.response.n_classes - 1
        return 1

    @property
    def kind(self) -> str:
        return self.response.kind

    @property
    def matrix(self) -> np.ndarray:
        """``n x p`` model matrix ``[t, X, W]``."""
        m = self.__dict__.get("_matrix")
        if m is None:
            m = np.column_stack([self.t, self.X, self.W])
            object.__setattr__(self, "_matrix", m)
        return m

    def transform(self, covariates, treatment) -> np.ndarray:
        """Build the model matrix for new rows using the stored centering/scaling."""
        X = (np.asarray(covariates, dtype=float) - self.x_mean) / self.x_scale
        t = np.asarray(treatment, dtype=float).ravel()
        if X.ndim != 2 or X.shape[1] != self.d or X.shape[0] != t.shape[0]:
            raise DataError("new data do not match the design dimensions")
        return np.column_stack([t, X, X * t[:, None]])


def assemble_design(dataset: Dataset, standardize: bool = True) -> Design:
    """Center (and optionally unit-scale) covariates, build ``W`` and center ``y``.

    Response centering is applied for the continuous response only.
    """
    X = dataset.covariates
    sd = X.std(axis=0, ddof=1)
    const = np.flatnonzero(sd <= 1e-12 * np.maximum(1.0, np.abs(X).max(axis=0)))
    if const.size:
        bad = ", ".join(dataset.names[j] for j in const)
        raise DataError(f"zero-variance covariate column(s): {bad}")
    mean = X.mean(axis=0)
    scale = sd if standardize else np.ones_like(sd)
    Xs = (X - mean) / scale
    t = dataset.treatment
    response = dataset.response
    y_mean = 0.0
    if isinstance(response, Continuous):
        y_mean = float(response.y.mean())
        response = Continuous(response.y - y_mean)
    return Design(t=t.copy(), X=Xs, W=Xs * t[:, None], response=response,
                  x_mean=mean, x_scale=scale, y_mean=y_mean, names=dataset.names)


def linear_predictor(design: Design, coef: Coefficients, cls: int = 0) -> np.ndarray:
    """``psi_i = tau t_i + beta' x_i + gamma' w_i`` for one outcome class."""
    if coef.d != design.d:
        raise DataError(f"coefficients have d={coef.d}, design has d={design.d}")
    if not 0 <= cls < coef.n_classes:
        raise IndexError(f"class index {cls} out of range")
    return coef.tau[cls] * design.t + design.X @ coef.beta[cls] + design.W @ coef.gamma[cls]


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------

def read_csv(path, kind: str, response_cols=None, treatment_col: str = "treatment") -> Dataset:
    """Read a dataset from a headed CSV file.

    ``kind`` is ``gaussian``, ``multinomial`` or ``cox``. Default response
    columns are ``y`` for the first two and ``time,status`` for ``cox``;
    every remaining column except the treatment is a covariate.
    """
    import csv

    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    header, body = [h.strip() for h in rows[0]], rows[1:]
    if response_cols is None:
        response_cols = ["time", "status"] if kind == "cox" else ["y"]
    response_cols = list(response_cols)
    for col in [*response_cols, treatment_col]:
        if col not in header:
            raise DataError(f"missing column: {col!r}", column=col)
    try:
        data = np.array([[float(c) if c.strip() != "" else np.nan for c in r] for r in body if r])
    except ValueError as err:
        raise DataError(f"{path}: non-numeric cell ({err})") from None
    if data.ndim != 2 or data.shape[1] != len(header):
        raise DataError(f"{path}: ragged rows")
    if np.isnan(data).any():
        i, j = np.argwhere(np.isnan(data))[0]
        raise DataError(f"{path}: missing value in column {header[j]!r}, row {i + 1}",
                        column=header[j])
    col = {h: j for j, h in enumerate(header)}
    cov_names = [h for h in header if h not in response_cols and h != treatment_col]
    if kind == "gaussian":
        response = Continuous(data[:, col[response_cols[0]]])
    elif kind == "multinomial":
        response = Categorical(data[:, col[response_cols[0]]])
    elif kind == "cox":
        response = Survival(data[:, col[response_cols[0]]], data[:, col[response_cols[1]]])
    else:
        raise DataError(f"unknown response kind {kind!r}")
    X = data[:, [col[h] for h in cov_names]]
    return Dataset(response, data[:, col[treatment_col]], X, cov_names)


def write_csv(path, dataset: Dataset, treatment_col: str = "treatment") -> None:
    """Inverse of :func:`read_csv`."""
    resp = dataset.response
    if isinstance(resp, Survival):
        head, cols = ["time", "status"], [resp.time, resp.status]
    elif isinstance(resp, Categorical):
        head, cols = ["y"], [resp.labels]
    else:
        head, cols = ["y"], [resp.y]
    header = head + [treatment_col] + list(dataset.names)
    block = np.column_stack(cols + [dataset.treatment, dataset.covariates])
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in block:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
