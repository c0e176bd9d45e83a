import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oulab.calculus import VectorTestFunction, cosine_ridge, grad_H, grad_H_field
from oulab.inequality import lp_norm
from oulab.model import DegenerateModelError, ModelSpec, derive, random_model
from oulab.numkit import expm
from oulab.polynomial import GaussianMoments, Polynomial, hermite_in_form, linear_form, random_polynomial
from oulab.sampling import Budget, QuadratureOrderError, gaussian_mc, set_threads
from oulab.semigroup import (
    ChaosIndex,
    GaussianMeasure,
    UnsupportedModelError,
    apply_P,
    apply_tensor_P,
    chaos_eigencheck,
    chaos_eigenfunction,
    decay_scan,
    invariance_defect,
    mehler_polynomial,
)


def _symmetric_model(seed, d):
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((d, d))
    return derive(ModelSpec(-(G @ G.T / d + 0.5 * np.eye(d)), np.eye(d)))


def test_constants_fixed(jordan):
    one = Polynomial.constant(1.0, 2)
    assert apply_P(jordan, 1.3, one, [0.4, -2.0]).value == pytest.approx(1.0)


def test_linear_functional_transported(jordan):
    u = np.array([0.3, -1.2])
    x = np.array([1.0, 2.0])
    val = apply_P(jordan, 0.8, linear_form(u), x).value
    assert val == pytest.approx(float(u @ expm(jordan.A, 0.8) @ x), rel=1e-13)


def test_scalar_second_moment_exact_and_mc(classical1):
    f = Polynomial.variable(0, 1) ** 2
    exact = 0.5 * (1 - math.exp(-2))
    assert apply_P(classical1, 1.0, f, [0.0]).value == pytest.approx(exact, rel=1e-14)
    q = apply_P(classical1, 1.0, f, [0.0], Budget("quadrature"))
    assert q.stderr == 0 and q.value == pytest.approx(exact, rel=1e-13)
    mc = apply_P(classical1, 1.0, f, [0.0], Budget("mc", 200_000, 3))
    assert abs(mc.value - exact) <= 3 * mc.stderr


def test_quadrature_order_too_low_refused(classical1):
    f = Polynomial.variable(0, 1) ** 6
    with pytest.raises(QuadratureOrderError):
        apply_P(classical1, 1.0, f, [0.0], Budget("quadrature", order=3))


def test_batch_points(jordan):
    rng = np.random.default_rng(0)
    f = random_polynomial(rng, 2, 3)
    X = rng.standard_normal((5, 2))
    exact = apply_P(jordan, 0.5, f, X).value
    quad = apply_P(jordan, 0.5, f, X, Budget("quadrature")).value
    np.testing.assert_allclose(quad, exact, rtol=1e-10, atol=1e-10)


def test_mc_thread_count_does_not_change_result(jordan):
    f = cosine_ridge([1.0, 0.5])
    b = Budget("mc", 200_000, 9)
    try:
        set_threads(1)
        a = apply_P(jordan, 0.5, f, [0.1, 0.2], b)
        set_threads(4)
        c = apply_P(jordan, 0.5, f, [0.1, 0.2], b)
    finally:
        set_threads(None)
    assert a.value == c.value and a.stderr == c.stderr


@given(st.integers(0, 10_000), st.floats(0.0, 2.0), st.floats(0.0, 2.0))
def test_semigroup_law_on_polynomials(seed, t, s):
    rng = np.random.default_rng(seed)
    dm = derive(random_model(rng, 2))
    f = random_polynomial(rng, 2, 3)
    lhs = mehler_polynomial(dm, t, mehler_polynomial(dm, s, f))
    rhs = mehler_polynomial(dm, t + s, f)
    assert lhs.allclose(rhs, atol=1e-9)


def test_invariance_defect():
    dm = derive(random_model(np.random.default_rng(2), 2))
    rng = np.random.default_rng(0)
    f = random_polynomial(rng, 2, 4)
    assert invariance_defect(dm, 0.0, f).value == 0.0
    assert abs(invariance_defect(dm, 0.7, f).value) <= 1e-9
    est = invariance_defect(dm, 0.7, cosine_ridge([1.0, -0.4]), Budget("mc", 1_000_000, 4))
    assert abs(est.value) <= 3 * est.stderr


@pytest.mark.parametrize("p", [2, 4])
def test_contraction_on_shared_samples(jordan, p):
    rng = np.random.default_rng(1)
    f = random_polynomial(rng, 2, 3)
    g = mehler_polynomial(jordan, 0.6, f)
    b = Budget("mc", 100_000, 5)
    nf, ng = lp_norm(jordan, f, p, b), lp_norm(jordan, g, p, b)
    assert ng.value <= nf.value * (1 + 3 * nf.stderr / nf.value)
    assert lp_norm(jordan, g, p).value <= lp_norm(jordan, f, p).value


def test_tensor_semigroup_examples(jordan):
    x = np.array([0.3, -0.7])
    h = np.array([1.0, 2.0])
    F = VectorTestFunction((Polynomial.constant(h[0], 2), Polynomial.constant(h[1], 2)))
    np.testing.assert_allclose(apply_tensor_P(jordan, 0.0, F, x).value, h)
    np.testing.assert_allclose(apply_tensor_P(jordan, 0.9, F, x).value, expm(jordan.Atilde_H.T, 0.9) @ h,
                               rtol=1e-13)
    G = VectorTestFunction((linear_form([1.0, 0.0]), linear_form([0.0, 1.0]) ** 2))
    np.testing.assert_allclose(apply_tensor_P(jordan, 0.0, G, x).value, G(x))


@given(st.integers(0, 10_000), st.sampled_from([0.1, 0.5, 1.0, 2.0]))
def test_intertwining(seed, t):
    rng = np.random.default_rng(seed)
    dm = derive(random_model(rng, 3, nonnormal=1.5))
    g = random_polynomial(rng, 3, 3)
    X = rng.standard_normal((8, 3))
    lhs = grad_H(mehler_polynomial(dm, t, g), X, dm.i)
    rhs = apply_tensor_P(dm, t, grad_H_field(g, dm.i), X).value
    assert np.abs(lhs - rhs).max() <= 1e-8 * max(1.0, np.abs(lhs).max())


def test_tensor_semigroup_stochastic_matches_exact(jordan):
    rng = np.random.default_rng(3)
    F = grad_H_field(random_polynomial(rng, 2, 3), jordan.i)
    x = np.array([0.2, 0.1])
    exact = apply_tensor_P(jordan, 0.5, F, x).value
    quad = apply_tensor_P(jordan, 0.5, F, x, Budget("quadrature")).value
    np.testing.assert_allclose(quad, exact, rtol=1e-10, atol=1e-12)


def test_tensor_semigroup_needs_full_noise():
    dm = derive(ModelSpec(np.array([[0.0, 1.0], [-1.0, -1.0]]), np.array([[0.0], [1.0]])))
    F = VectorTestFunction((Polynomial.constant(1.0, 2),))
    with pytest.raises(DegenerateModelError):
        apply_tensor_P(dm, 1.0, F, [0.0, 0.0])


def test_chaos_scalar_examples(classical1):
    assert chaos_eigencheck(classical1, [0], 1.0) == 0.0
    x = Polynomial.variable(0, 1)
    assert mehler_polynomial(classical1, 1.0, x).allclose(x * math.exp(-1.0))
    h2, kappa = chaos_eigenfunction(classical1, ChaosIndex((2,)))
    assert kappa == pytest.approx(-2.0)
    # closed form: He_2(sqrt2 x)/sqrt2 = sqrt2 x^2 - 1/sqrt2 ; P(1) x^2 = e^{-2} x^2 + (1 - e^{-2})/2
    expected = math.sqrt(2) * (math.exp(-2) * x ** 2 + 0.5 * (1 - math.exp(-2))) - 1 / math.sqrt(2)
    assert mehler_polynomial(classical1, 1.0, h2).allclose(expected, atol=1e-14)
    assert mehler_polynomial(classical1, 1.0, h2).allclose(h2 * math.exp(-2.0), atol=1e-14)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_chaos_defect_symmetric_models(d):
    dm = _symmetric_model(d, d)
    rng = np.random.default_rng(d)
    for _ in range(6):
        idx = rng.multinomial(rng.integers(0, 5), np.ones(d) / d)
        assert chaos_eigencheck(dm, idx, 0.8) <= 1e-7


def test_chaos_refuses_nonsymmetric(jordan):
    with pytest.raises(UnsupportedModelError):
        chaos_eigencheck(jordan, [1, 0], 1.0)


def test_chaos_index_validation():
    with pytest.raises(ValueError):
        ChaosIndex((1, -1))


def test_decay_scan_first_and_second_chaos(classical1):
    x = Polynomial.variable(0, 1)
    scan = decay_scan(classical1, x, 2, [0.0, 0.5, 1.0, 2.0])
    assert scan.rate == pytest.approx(1.0, rel=1e-12)
    assert float(scan.rows[0][1].value) == pytest.approx(math.sqrt(0.5))
    scan2 = decay_scan(classical1, hermite_in_form(2, [math.sqrt(2)]), 2, [0.0, 0.5, 1.0])
    assert scan2.rate == pytest.approx(2.0, rel=1e-12)
    assert scan2.monotone and scan2.theta_fit == pytest.approx(1.0)


def test_decay_scan_subtracts_mean(classical1):
    f = Polynomial.variable(0, 1) ** 2
    scan = decay_scan(classical1, f, 2, [0.0, 1.0])
    assert float(scan.rows[1][1].value) < float(scan.rows[0][1].value)
    assert scan.rate == pytest.approx(2.0)


def test_decay_scan_validation(classical1):
    with pytest.raises(ValueError):
        decay_scan(classical1, Polynomial.variable(0, 1), 1.0, [0.0])
    with pytest.raises(ValueError):
        decay_scan(classical1, Polynomial.variable(0, 1), 3, [0.0])


def test_decay_scan_stochastic_smooth(jordan):
    scan = decay_scan(jordan, cosine_ridge([1.0, 0.0]), 3, [0.0, 0.5, 1.0], Budget("mc", 50_000, 1))
    assert scan.decay_ok and scan.theta_fit > 0


def test_gaussian_measure_sampling_covariance(jordan):
    mu = GaussianMeasure.invariant(jordan)
    X = mu.sample(np.random.default_rng(0), 200_000)
    np.testing.assert_allclose(np.cov(X.T), jordan.Qinf, atol=5e-3)
