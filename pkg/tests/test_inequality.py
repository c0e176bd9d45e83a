import csv
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate, stats

from oulab.calculus import cosine_ridge, tanh_ridge
from oulab.inequality import (
    REPORT_COLUMNS,
    ExactSchemeError,
    dhstar_poincare,
    dirichlet_laplacian,
    duality_convergence,
    duality_identity_defect,
    gaussian_abs_moment_root,
    gradient_estimate_scan,
    lp_norm,
    poincare_ratio,
    sharpness_search,
    weighted_norm_counterexample,
    write_reports_csv,
)
from oulab.model import ModelSpec, derive, random_model
from oulab.polynomial import Polynomial, linear_form, random_polynomial
from oulab.sampling import Budget


@pytest.mark.parametrize("p", [1.0, 4 / 3, 2.0, 3.0, 4.0])
def test_abs_moment_root_against_quadrature(p):
    val, _ = integrate.quad(lambda x: abs(x) ** p * stats.norm.pdf(x), -np.inf, np.inf)
    assert gaussian_abs_moment_root(p) == pytest.approx(val ** (1 / p), rel=1e-10)


def test_lp_norm_examples(classical1):
    x = Polynomial.variable(0, 1)
    assert lp_norm(classical1, x, 2).value == pytest.approx(math.sqrt(0.5))
    # E x^4 = 3/4 under N(0, 1/2)
    assert lp_norm(classical1, x, 4).value == pytest.approx(0.75 ** 0.25)
    assert lp_norm(classical1, Polynomial.constant(-2.0, 1), 2).value == pytest.approx(2.0)


def test_lp_norm_exact_refusals(classical1):
    with pytest.raises(ExactSchemeError):
        lp_norm(classical1, Polynomial.variable(0, 1), 3)
    with pytest.raises(ExactSchemeError):
        lp_norm(classical1, cosine_ridge([1.0]), 2)
    fb = lp_norm(classical1, cosine_ridge([1.0]), 2, fallback=Budget("mc", 50_000, 1))
    assert fb.scheme == "mc"


@pytest.mark.parametrize("p", [2, 4])
def test_lp_norm_mc_agrees_with_exact(jordan, p):
    f = random_polynomial(np.random.default_rng(2), 2, 3)
    exact = lp_norm(jordan, f, p).value
    mc = lp_norm(jordan, f, p, Budget("mc", 200_000, 7))
    assert abs(mc.value - exact) <= 4 * mc.stderr


def test_lp_norm_rejects_p_below_one(classical1):
    with pytest.raises(ValueError):
        lp_norm(classical1, Polynomial.variable(0, 1), 0.5)


def test_poincare_examples(classical1):
    x = Polynomial.variable(0, 1)
    rep = poincare_ratio(classical1, x, 2)
    assert rep.ratio.value == pytest.approx(1 / math.sqrt(2), rel=1e-12)
    assert rep.bound == pytest.approx(1 / math.sqrt(2)) and rep.within_bound
    # f = x^2: ||x^2 - 1/2||_2 = 1/sqrt2, ||2x||_2 = sqrt2
    assert poincare_ratio(classical1, x ** 2, 2).ratio.value == pytest.approx(0.5)
    assert poincare_ratio(classical1, Polynomial.constant(5.0, 1), 2).ratio.value == 0.0


def test_poincare_mc_shares_samples(classical1):
    rep = poincare_ratio(classical1, Polynomial.variable(0, 1), 2, Budget("mc", 100_000, 3))
    assert abs(rep.ratio.value - 1 / math.sqrt(2)) <= 4 * rep.ratio.stderr
    smooth = poincare_ratio(classical1, cosine_ridge([1.0]), 4 / 3, Budget("mc", 100_000, 3))
    assert math.isfinite(smooth.ratio.value) and smooth.bound is None


def test_poincare_flags_invisible_gradient():
    dm = derive(ModelSpec(np.array([[-1.0, 0.0], [0.0, -2.0]]), np.array([[1.0], [0.0]])))
    rep = poincare_ratio(dm, Polynomial.variable(1, 2), 2)
    assert rep.ratio.value == math.inf and rep.flagged


@given(st.integers(0, 10_000))
def test_poincare_bound_random(seed):
    rng = np.random.default_rng(seed)
    dm = derive(random_model(rng, 2, nonnormal=1.0))
    f = random_polynomial(rng, 2, 3)
    if f.is_constant():
        return
    assert poincare_ratio(dm, f, 2).within_bound


def test_sharpness_diag_gap():
    dm = derive(ModelSpec(np.diag([-1.0, -3.0]), np.eye(2)))
    res = sharpness_search(dm, 2, n_random=12)
    assert res.linear_max == pytest.approx(1 / math.sqrt(2), rel=1e-12)
    assert res.attained_by_linear and res.within_bound
    assert abs(abs(res.maximizer[0]) - 1) <= 1e-10


def test_sharpness_linear_max_matches_bound_for_random_models():
    rng = np.random.default_rng(8)
    for _ in range(5):
        dm = derive(random_model(rng, 3, nonnormal=2.0))
        res = sharpness_search(dm, 2, n_random=0)
        assert res.linear_max == pytest.approx(res.bound, rel=1e-8)


def test_duality_scalar_example(classical1):
    x = Polynomial.variable(0, 1)
    assert duality_identity_defect(classical1, x, x, 1.0) <= 1e-12
    assert duality_identity_defect(classical1, x, x, 0.0) == 0.0
    with pytest.raises(ValueError):
        duality_identity_defect(classical1, x, x, -1.0)


def test_duality_random_and_convergence(jordan):
    rng = np.random.default_rng(6)
    f, g = random_polynomial(rng, 2, 2), random_polynomial(rng, 2, 2)
    assert duality_identity_defect(jordan, f, g, 1.0, 256, "simpson") <= 1e-6
    conv = duality_convergence(jordan, f, g, 1.0)
    assert min(conv["orders"]) >= 1.9


def test_gradient_scan_examples(classical1):
    scan = gradient_estimate_scan(classical1, Polynomial.constant(1.0, 1), 2, [0.1, 0.5, 1.0])
    assert all(e.value == 0.0 for _, e in scan.rows)
    x = Polynomial.variable(0, 1)
    scan = gradient_estimate_scan(classical1, x, 2, [0.1, 0.5, 1.0])
    for t, e in scan.rows:
        assert e.value == pytest.approx(math.sqrt(2 * t) * math.exp(-t), rel=1e-12)
    with pytest.raises(ValueError):
        gradient_estimate_scan(classical1, x, 2, [0.0, 0.5])


def test_gradient_scan_smooth_sign_bounded(classical1):
    times = [0.01, 0.05, 0.25, 0.5, 1.0]
    scan = gradient_estimate_scan(classical1, tanh_ridge([1.0], 5.0), 2, times, Budget("mc", 100_000, 2))
    assert scan.bounded(3.0)


def test_dhstar_examples(classical1):
    rep = dhstar_poincare(classical1, Polynomial.variable(0, 1), 2)
    assert rep.ratio.value == pytest.approx(1 / math.sqrt(2), rel=1e-12)
    with pytest.raises(ValueError):
        dhstar_poincare(classical1, Polynomial.constant(1.0, 1), 2)


def test_dirichlet_laplacian_symmetric_negative():
    L = dirichlet_laplacian(10)
    assert np.array_equal(L, L.T)
    assert np.linalg.eigvalsh(L).max() < 0


def test_counterexample_sweep():
    res = weighted_norm_counterexample()
    assert res.stable and res.found and res.monotone_after_onset
    assert res.growth > 1.0
    assert res.sweep[0][0] == 1.0 and res.sweep[0][1] <= 1.0
    unweighted = weighted_norm_counterexample(r_grid=[1.0])
    assert not unweighted.found


def test_report_csv_columns(tmp_path, classical1):
    reps = [poincare_ratio(classical1, linear_form([1.0]), 2), poincare_ratio(classical1, cosine_ridge([1.0]), 2,
                                                                              Budget("mc", 10_000, 1))]
    path = tmp_path / "r.csv"
    write_reports_csv(path, reps)
    rows = list(csv.reader(open(path)))
    assert tuple(rows[0]) == REPORT_COLUMNS
    assert len(rows) == 3 and rows[2][-1] == "1"
