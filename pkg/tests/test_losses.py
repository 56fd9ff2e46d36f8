import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import central_gradient
from smog.core import Coefficients, Continuous, Dataset, Survival, assemble_design
from smog.losses import (CoxLoss, GaussianLoss, LossOverflowError, MultinomialLoss, cox_loss,
                         gaussian_loss, multinomial_loss)


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-12)


def random_M(rng, n, p):
    return rng.standard_normal((n, p))


# -- gaussian ---------------------------------------------------------------

def test_gaussian_at_zero(rng):
    M, y = random_M(rng, 15, 5), rng.standard_normal(15)
    loss = GaussianLoss(M, y)
    val, grad = loss.value_grad(np.zeros(5))
    assert val == pytest.approx(0.5 * y @ y, rel=1e-14)
    assert np.allclose(grad, -M.T @ y, atol=1e-13)


def test_gaussian_perfect_fit(rng):
    M, theta = random_M(rng, 15, 5), rng.standard_normal(5)
    val, grad = GaussianLoss(M, M @ theta).value_grad(theta)
    assert val < 1e-25
    assert np.abs(grad).max() < 1e-12


def test_gaussian_wrapper_matches_class(rng):
    ds = Dataset(Continuous(rng.standard_normal(20)), rng.choice([-1, 1], 20),
                 rng.standard_normal((20, 3)))
    design = assemble_design(ds)
    coef = Coefficients(0.3, rng.standard_normal(3), rng.standard_normal(3))
    ev = gaussian_loss(design, design.response.y, coef)
    ref = GaussianLoss(design.matrix, design.response.y).value_grad(coef.to_vector())
    assert ev.value == ref[0]
    assert np.array_equal(ev.gradient, ref[1])


def test_gaussian_gradient_fd(rng):
    M, y = random_M(rng, 30, 7), rng.standard_normal(30)
    loss = GaussianLoss(M, y)
    theta = rng.standard_normal(7)
    assert rel_err(loss.value_grad(theta)[1], central_gradient(loss.value, theta)) < 1e-6


def test_gaussian_bregman_identity(rng):
    M, y = random_M(rng, 12, 4), rng.standard_normal(12)
    loss = GaussianLoss(M, y)
    theta, step = rng.standard_normal(4), rng.standard_normal(4)
    f0, g = loss.value_grad(theta)
    direct = loss.value(theta + step) - f0 - g @ step
    assert loss.bregman(theta, step, f0, g) == pytest.approx(direct, rel=1e-10)


# -- multinomial ------------------------------------------------------------

@pytest.mark.parametrize("k", [2, 3])
def test_multinomial_zero_is_uniform(rng, k):
    n, p = 25, 5
    labels = rng.integers(1, k + 1, n)
    loss = MultinomialLoss(random_M(rng, n, p), labels, k)
    assert loss.value(np.zeros(p * (k - 1))) == pytest.approx(n * math.log(k), rel=1e-14)


def test_multinomial_literal_formula(rng):
    n, p, k = 12, 3, 3
    M, labels = random_M(rng, n, p), rng.integers(1, k + 1, n)
    theta = rng.standard_normal(p * (k - 1))
    ref = 0.0
    for i in range(n):
        psi = [M[i] @ theta[c * p:(c + 1) * p] for c in range(k - 1)]
        ref += math.log(1 + sum(math.exp(s) for s in psi))
        if labels[i] < k:
            ref -= psi[labels[i] - 1]
    assert MultinomialLoss(M, labels, k).value(theta) == pytest.approx(ref, rel=1e-12)


def test_multinomial_gradient_fd(rng):
    n, p, k = 40, 5, 3
    loss = MultinomialLoss(random_M(rng, n, p), rng.integers(1, k + 1, n), k)
    theta = 0.5 * rng.standard_normal(p * (k - 1))
    assert rel_err(loss.value_grad(theta)[1], central_gradient(loss.value, theta)) < 1e-6


def test_multinomial_large_predictor_stable(rng):
    M = random_M(rng, 10, 2) * 500
    loss = MultinomialLoss(M, rng.integers(1, 3, 10), 2)
    val, grad = loss.value_grad(np.array([3.0, -2.0]))
    assert np.isfinite(val) and np.all(np.isfinite(grad))


def test_multinomial_rejects_bad_label(rng):
    with pytest.raises(ValueError):
        MultinomialLoss(random_M(rng, 4, 2), [1, 2, 3, 4], 3)


# -- cox --------------------------------------------------------------------

def efron_literal(psi, time, status):
    """Transcription of the tie-corrected negative partial log-likelihood, one term at a time."""
    phi = [math.exp(v) for v in psi]
    total = 0.0
    for t in sorted({time[i] for i in range(len(time)) if status[i] == 1}):
        ties = [j for j in range(len(time)) if time[j] == t and status[j] == 1]
        m = len(ties)
        risk = sum(phi[j] for j in range(len(time)) if time[j] >= t)
        tied = sum(phi[j] for j in ties)
        for j in ties:
            total -= psi[j]
        for l in range(m):
            total += math.log(risk - l / m * tied)
    return total


def test_cox_distinct_times_at_zero():
    loss = CoxLoss(np.ones((3, 1)), [1.0, 2.0, 3.0], [1, 1, 1])
    assert loss.value(np.zeros(1)) == pytest.approx(math.log(3) + math.log(2) + math.log(1))


def test_cox_single_event_at_zero():
    n = 7
    status = np.zeros(n, dtype=int)
    status[0] = 1
    loss = CoxLoss(np.ones((n, 2)), np.arange(1.0, n + 1), status)
    assert loss.value(np.zeros(2)) == pytest.approx(math.log(n))


def test_cox_five_subjects_with_tie(rng):
    time = np.array([2.0, 3.0, 3.0, 5.0, 6.0])
    status = np.array([1, 1, 1, 0, 1])
    M = rng.standard_normal((5, 3))
    theta = rng.standard_normal(3)
    loss = CoxLoss(M, time, status)
    assert abs(loss.value(theta) - efron_literal(M @ theta, time, status)) < 1e-10
    assert rel_err(loss.value_grad(theta)[1], central_gradient(loss.value, theta)) < 1e-6


def test_cox_censored_at_event_time_in_risk_set():
    # a subject censored exactly at an event time still counts at that time
    time = np.array([1.0, 1.0, 2.0])
    status = np.array([1, 0, 1])
    assert CoxLoss(np.ones((3, 1)), time, status).value(np.zeros(1)) == pytest.approx(math.log(3))


def test_cox_random_ties_literal(rng):
    n = 30
    time = rng.integers(1, 8, n).astype(float)
    status = (rng.random(n) < 0.7).astype(int)
    status[0] = 1
    M = rng.standard_normal((n, 4))
    theta = 0.3 * rng.standard_normal(4)
    loss = CoxLoss(M, time, status)
    assert abs(loss.value(theta) - efron_literal(M @ theta, time, status)) < 1e-10
    assert rel_err(loss.value_grad(theta)[1], central_gradient(loss.value, theta)) < 1e-6


def test_cox_permutation_invariant(rng):
    n = 20
    time = rng.integers(1, 6, n).astype(float)
    status = np.ones(n, dtype=int)
    M = rng.standard_normal((n, 3))
    theta = rng.standard_normal(3)
    perm = rng.permutation(n)
    a = CoxLoss(M, time, status).value(theta)
    b = CoxLoss(M[perm], time[perm], status[perm]).value(theta)
    assert abs(a - b) < 1e-12


def test_cox_all_censored():
    with pytest.raises(ValueError):
        CoxLoss(np.ones((3, 1)), [1.0, 2.0, 3.0], [0, 0, 0])


def test_cox_overflow_reported():
    loss = CoxLoss(np.array([[1.0], [2.0]]), [1.0, 2.0], [1, 1])
    with pytest.raises(LossOverflowError, match="standardiz"):
        loss.value(np.array([1e308]))


def test_cox_wrapper(rng):
    n = 15
    ds = Dataset(Survival(rng.exponential(1, n), np.ones(n)), rng.choice([-1, 1], n),
                 rng.standard_normal((n, 2)))
    design = assemble_design(ds)
    coef = Coefficients.zeros(2)
    ev = cox_loss(design, ds.response.time, ds.response.status, coef)
    assert ev.gradient.shape == (5,)
    assert ev.value == pytest.approx(sum(math.log(k) for k in range(1, n + 1)))


def test_multinomial_wrapper(rng):
    from smog.core import Categorical

    ds = Dataset(Categorical(rng.integers(1, 4, 20), 3), rng.choice([-1, 1], 20),
                 rng.standard_normal((20, 2)))
    design = assemble_design(ds)
    ev = multinomial_loss(design, ds.response.labels, Coefficients.zeros(2, 2))
    assert ev.value == pytest.approx(20 * math.log(3))
    assert ev.gradient.shape == (10,)


# -- convexity --------------------------------------------------------------

def _losses(seed):
    rng = np.random.default_rng(seed)
    n, p = 20, 3
    M = rng.standard_normal((n, p))
    time = rng.integers(1, 5, n).astype(float)
    status = np.ones(n, dtype=int)
    return [GaussianLoss(M, rng.standard_normal(n)),
            MultinomialLoss(M, rng.integers(1, 4, n), 3),
            CoxLoss(M, time, status)]


@given(seed=st.integers(0, 10_000), a=st.floats(0.01, 0.99))
def test_losses_convex(seed, a):
    rng = np.random.default_rng(seed + 1)
    for loss in _losses(seed):
        x, y = rng.standard_normal(loss.dim), rng.standard_normal(loss.dim)
        mid = loss.value(a * x + (1 - a) * y)
        assert mid <= a * loss.value(x) + (1 - a) * loss.value(y) + 1e-10 * (1 + abs(mid))
