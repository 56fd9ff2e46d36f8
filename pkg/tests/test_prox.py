import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import minimize

from smog.prox import penalty_value, prox_blocks, prox_full, prox_pair, soft_threshold


def pair_objective(x, b1, b2, lam1, lam2, lam3):
    t1, t2 = x
    return (0.5 * ((t1 - b1) ** 2 + (t2 - b2) ** 2) + lam1 * math.hypot(t1, t2)
            + lam2 * (t1 * t1 + t2 * t2) + lam3 * abs(t2))


def numeric_pair(b1, b2, lam1, lam2, lam3):
    """Grid search followed by local refinement of the per-biomarker objective."""
    span = max(abs(b1), abs(b2), 1e-3)
    grid = np.linspace(-span, span, 201)
    g1, g2 = np.meshgrid(grid, grid, indexing="ij")
    vals = (0.5 * ((g1 - b1) ** 2 + (g2 - b2) ** 2) + lam1 * np.hypot(g1, g2)
            + lam2 * (g1 ** 2 + g2 ** 2) + lam3 * np.abs(g2))
    i, j = np.unravel_index(np.argmin(vals), vals.shape)
    best = np.array([grid[i], grid[j]])
    candidates = [best, np.zeros(2), np.array([best[0], 0.0])]
    results = []
    for x0 in candidates:
        r = minimize(pair_objective, x0, args=(b1, b2, lam1, lam2, lam3), method="Nelder-Mead",
                     options={"xatol": 1e-12, "fatol": 1e-15, "maxiter": 20000})
        results.append(r)
    # also consider the one-dimensional restriction theta2 = 0
    r1 = minimize(lambda x: pair_objective([x[0], 0.0], b1, b2, lam1, lam2, lam3), [best[0]],
                  method="Nelder-Mead", options={"xatol": 1e-12, "fatol": 1e-15})
    r1.x = np.array([r1.x[0], 0.0])
    results.append(r1)
    results.append(type(r1)(x=np.zeros(2), fun=pair_objective([0, 0], b1, b2, lam1, lam2, lam3)))
    return min(results, key=lambda r: r.fun).x


@pytest.mark.parametrize("x, lam, expected", [(2.0, 0.5, 1.5), (-0.3, 0.5, 0.0), (-2.0, 0.5, -1.5)])
def test_soft_threshold(x, lam, expected):
    assert soft_threshold(x, lam) == expected


def test_prox_pair_zero_input():
    assert prox_pair(0.0, 0.0, 1.0, 0.3, 0.2) == (0.0, 0.0)


def test_prox_pair_group_kill():
    assert prox_pair(0.1, 0.1, 1.0, 0.0, 0.0) == (0.0, 0.0)


def test_prox_pair_boundary_is_zero():
    assert prox_pair(3.0, 4.0, 5.0, 0.0, 0.0) == (0.0, 0.0)


def test_prox_pair_worked_example():
    t1, t2 = prox_pair(1.0, 0.5, 0.3, 0.0, 0.2)
    scale = 1 - 0.3 / math.sqrt(1.09)
    assert t1 == pytest.approx(scale * 1.0, abs=1e-15)
    assert t2 == pytest.approx(scale * 0.3, abs=1e-15)
    assert abs(t1 - 0.71265) < 1e-5 and abs(t2 - 0.21379) < 1e-5
    ref = numeric_pair(1.0, 0.5, 0.3, 0.0, 0.2)
    assert np.abs(np.array([t1, t2]) - ref).max() < 1e-6


def test_prox_pair_numeric_oracle_random(rng):
    for _ in range(40):
        b1, b2 = rng.normal(0, 2, 2)
        lam1, lam2, lam3 = rng.uniform(0, 1.5, 3)
        ref = numeric_pair(b1, b2, lam1, lam2, lam3)
        got = np.array(prox_pair(b1, b2, lam1, lam2, lam3))
        assert np.abs(got - ref).max() < 1e-6


def test_predictive_dies_prognostic_survives():
    # |b2| <= lam3 zeroes the predictive part; the prognostic part is group-shrunk alone
    t1, t2 = prox_pair(2.0, 0.1, 0.5, 0.25, 0.3)
    assert t2 == 0.0
    assert t1 == pytest.approx(soft_threshold(2.0, 0.5) / 1.5)


def test_prox_full_tau_passthrough():
    b = np.zeros(7)
    b[0] = 7.3
    coef = prox_full(b, 1.0, 1.0, 1.0)
    assert coef.tau[0] == 7.3
    assert not coef.beta.any() and not coef.gamma.any()


def test_prox_full_identity_without_penalty(rng):
    b = rng.standard_normal(11)
    assert np.array_equal(prox_full(b, 0.0, 0.0, 0.0).to_vector(), b)


def test_prox_full_blockwise_and_numeric(rng):
    d = 5
    b = rng.normal(0, 1.5, 2 * d + 1)
    lam = (0.6, 0.1, 0.4)
    coef = prox_full(b, *lam)
    assert coef.tau[0] == b[0]
    for j in range(d):
        pair = prox_pair(b[1 + j], b[1 + d + j], *lam)
        assert (coef.beta[0, j], coef.gamma[0, j]) == pair
        assert np.abs(np.array(pair) - numeric_pair(b[1 + j], b[1 + d + j], *lam)).max() < 1e-6


def test_prox_blocks_multiclass(rng):
    d = 3
    theta = rng.standard_normal(2 * (2 * d + 1))
    out = prox_blocks(theta, d, 0.5, 0.0, 0.2)
    for k in range(2):
        blk = theta[k * 7:(k + 1) * 7]
        assert np.array_equal(out[k * 7:(k + 1) * 7], prox_full(blk, 0.5, 0.0, 0.2).to_vector())


def test_penalty_value():
    theta = np.array([5.0, 3.0, 0.0, 4.0, 0.0])
    assert penalty_value(theta, 2, 1.0, 0.5, 2.0) == pytest.approx(5.0 + 12.5 + 8.0)


def test_reductions(rng):
    b = rng.standard_normal(9)
    d = 4
    # lam3 = 0: pure group lasso
    coef = prox_full(b, 0.7, 0.0, 0.0)
    for j in range(d):
        v = np.array([b[1 + j], b[1 + d + j]])
        nv = np.linalg.norm(v)
        ref = max(0.0, 1 - 0.7 / nv) * v
        assert np.allclose([coef.beta[0, j], coef.gamma[0, j]], ref, atol=1e-15)
    # lam1 = lam2 = 0: lasso on gamma, identity on beta
    coef = prox_full(b, 0.0, 0.0, 0.5)
    assert np.array_equal(coef.beta[0], b[1:d + 1])
    assert np.allclose(coef.gamma[0], soft_threshold(b[d + 1:], 0.5))


vec = st.lists(st.floats(-10, 10, allow_nan=False), min_size=9, max_size=9).map(np.array)
lams = st.tuples(st.floats(1e-6, 5), st.floats(0, 5), st.floats(0, 5))


@given(b=vec, lam=lams)
def test_hierarchy_property(b, lam):
    coef = prox_full(b, *lam)
    assert np.all((coef.gamma == 0) | (coef.beta != 0) | (b[1:5] == 0))


@given(seed=st.integers(0, 2 ** 31))
def test_hierarchy_many_random(seed):
    rng = np.random.default_rng(seed)
    for _ in range(50):
        b = rng.normal(0, 2, 21)
        coef = prox_full(b, rng.uniform(1e-3, 3), rng.uniform(0, 2), rng.uniform(0, 3))
        gam, bet = coef.gamma[0], coef.beta[0]
        # a zero prognostic input with nonzero predictive output would break the hierarchy
        assert np.all((gam == 0) | (bet != 0) | (b[1:11] == 0))


@given(a=vec, b=vec, lam1=st.floats(0, 5), lam3=st.floats(0, 5))
def test_nonexpansive(a, b, lam1, lam3):
    pa = prox_full(a, lam1, 0.0, lam3).to_vector()
    pb = prox_full(b, lam1, 0.0, lam3).to_vector()
    assert np.linalg.norm(pa - pb) <= np.linalg.norm(a - b) + 1e-10


@given(b=vec, lam=lams)
def test_shrinkage(b, lam):
    assert np.linalg.norm(prox_full(b, *lam).to_vector()) <= np.linalg.norm(b) + 1e-12
