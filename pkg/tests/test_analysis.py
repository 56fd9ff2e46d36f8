import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import minimize_scalar

from conftest import random_dataset
from smog.analysis import (NEGATIVE, POSITIVE, dichotomize, relaxed_refit, standardize_covariates,
                           subgroup_summary, survival_table, treatment_contrast,
                           treatment_hazard_ratio, write_subgroups)
from smog.core import Coefficients, Dataset, Survival, hierarchy_satisfied
from smog.losses import CoxLoss
from smog.solver import SolverOptions


def test_contrast_zero_gamma(rng):
    X = rng.standard_normal((6, 3))
    assert np.array_equal(treatment_contrast(Coefficients.zeros(3), X), np.zeros(6))


def test_contrast_single_term():
    X = np.array([[2.0, 5.0], [1.0, -3.0]])
    coef = Coefficients(0.0, [1.0, 0.0], [-0.5, 0.0])
    assert treatment_contrast(coef, X)[0] == -1.0


def test_contrast_naive_oracle_and_linearity(rng):
    X = rng.standard_normal((10, 4))
    g1, g2 = rng.standard_normal(4), rng.standard_normal(4)
    z = treatment_contrast(Coefficients(0.0, np.ones(4), g1), X)
    for i in range(10):
        assert abs(z[i] - sum(X[i, j] * g1[j] for j in range(4))) < 1e-12
    a, b = 1.7, -0.4
    lhs = treatment_contrast(Coefficients(0.0, np.ones(4), a * g1 + b * g2), X)
    rhs = a * z + b * treatment_contrast(Coefficients(0.0, np.ones(4), g2), X)
    assert np.abs(lhs - rhs).max() < 1e-12


def test_contrast_dimension_mismatch(rng):
    with pytest.raises(ValueError):
        treatment_contrast(Coefficients.zeros(3), rng.standard_normal((4, 2)))


def test_dichotomize_examples():
    assert dichotomize([-1.0, 1.0]).tolist() == [POSITIVE, NEGATIVE]
    assert set(dichotomize(np.zeros(5))) == {NEGATIVE}


def test_threshold_shift(rng):
    z = rng.standard_normal(200)
    c = 0.4
    changed = dichotomize(z) != dichotomize(z, c)
    assert np.array_equal(changed, (z >= 0) & (z < c))


@given(z=st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=30), s=st.floats(1e-3, 1e3))
def test_dichotomize_scale_invariant(z, s):
    z = np.array(z)
    assert np.array_equal(dichotomize(z), dichotomize(s * z))


def test_relaxed_refit_full_support_is_ols(rng):
    ds = random_dataset(rng, n=120, d=4)
    res = relaxed_refit(ds, np.arange(4), np.arange(4),
                        SolverOptions(eps_abs=1e-9, eps_rel=1e-9, max_iter=20000))
    M, y = res.design.matrix, res.design.response.y
    ols = np.linalg.solve(M.T @ M, M.T @ y)
    assert np.abs(res.coefficients.to_vector() - ols).max() < 1e-3


def test_relaxed_refit_single_prognostic(rng):
    ds = random_dataset(rng, n=80, d=5)
    res = relaxed_refit(ds, [0])
    coef = res.coefficients
    assert np.flatnonzero(coef.beta[0]).tolist() == [0]
    assert not coef.gamma.any()
    assert coef.tau[0] != 0
    assert hierarchy_satisfied(coef)


def test_relaxed_refit_never_enlarges(rng):
    ds = random_dataset(rng, n=80, d=6, kind="cox")
    b = np.array([True, True, False, True, False, False])
    g = np.array([True, False, False, False, False, False])
    res = relaxed_refit(ds, b, g)
    nb = res.coefficients.beta[0] != 0
    ng = res.coefficients.gamma[0] != 0
    assert not np.any(nb & ~b) and not np.any(ng & ~g)
    assert hierarchy_satisfied(res.coefficients)


def test_relaxed_refit_rejects_bad_support(rng):
    ds = random_dataset(rng, n=40, d=3)
    with pytest.raises(ValueError, match="hierarchy"):
        relaxed_refit(ds, [0], [1])
    with pytest.raises(ValueError):
        relaxed_refit(ds, [], [])


def test_relaxed_refit_multinomial(rng):
    ds = random_dataset(rng, n=90, d=3, kind="multinomial", k=3)
    res = relaxed_refit(ds, [0, 2], [2])
    coef = res.coefficients
    assert not coef.beta[:, 1].any() and not coef.gamma[:, :2].any()


def hazard_ratio_oracle(time, status, treated):
    arm = treated.astype(float)[:, None]
    loss = CoxLoss(arm, time, status)
    b = minimize_scalar(lambda v: loss.value(np.array([v])), bounds=(-10, 10), method="bounded",
                        options={"xatol": 1e-12}).x
    h = 1e-4
    info = (loss.value(np.array([b + h])) - 2 * loss.value(np.array([b]))
            + loss.value(np.array([b - h]))) / h ** 2
    se = 1 / math.sqrt(info)
    return math.exp(b), math.exp(b - 1.96 * se), math.exp(b + 1.96 * se)


def test_hazard_ratio_against_partial_likelihood(rng):
    n = 150
    t = rng.choice([-1.0, 1.0], n)
    time = rng.exponential(1.0, n) * np.exp(-0.5 * (t > 0))
    time = np.round(time, 1) + 0.05  # introduce ties
    status = (rng.random(n) < 0.85).astype(int)
    hr, lo, hi = treatment_hazard_ratio(time, status, t)
    ref = hazard_ratio_oracle(time, status, t > 0)
    assert hr == pytest.approx(ref[0], rel=1e-5)
    assert lo == pytest.approx(ref[1], rel=1e-3) and hi == pytest.approx(ref[2], rel=1e-3)


def test_hazard_ratio_degenerate():
    hr = treatment_hazard_ratio([1.0, 2.0], [1, 1], [1, 1])
    assert all(math.isnan(v) for v in hr)


def test_subgroup_pipeline(rng, tmp_path):
    ds = random_dataset(rng, n=100, d=3, kind="cox")
    z = np.zeros(100)
    labels = dichotomize(z)
    summary = subgroup_summary(ds, labels)
    assert [s.n for s in summary] == [0, 100]
    assert summary[1].events == int(ds.response.status.sum())
    assert summary[1].hazard_ratio > 0
    write_subgroups(tmp_path / "g.csv", tmp_path / "g.json", z, labels, summary)
    doc = json.loads((tmp_path / "g.json").read_text())
    assert doc["schema"] == "smog/1"
    assert doc["groups"][0]["hazard_ratio"] is None
    lines = (tmp_path / "g.csv").read_text().splitlines()
    assert lines[0] == "subject,z,group" and len(lines) == 101


def test_survival_table_hand_computed():
    ds = Dataset(Survival([1.0, 2.0, 2.0, 3.0], [1, 1, 0, 1]), [1, 1, 1, 1],
                 np.array([[0.0], [1.0], [2.0], [3.0]]))
    rows = survival_table(ds, np.array([NEGATIVE] * 4))
    surv = [(r["time"], r["n_risk"], r["n_event"], round(r["survival"], 12)) for r in rows]
    assert surv == [(1.0, 4, 1, 0.75), (2.0, 3, 1, 0.5), (3.0, 1, 1, 0.0)]


def test_standardize_covariates(rng):
    from smog.core import assemble_design

    ds = random_dataset(rng, n=30, d=3)
    design = assemble_design(ds)
    assert np.allclose(standardize_covariates(design, ds.covariates), design.X, atol=1e-14)
    with pytest.raises(ValueError):
        standardize_covariates(design, np.ones((2, 2)))
