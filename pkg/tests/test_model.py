import json
import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, strategies as st
from scipy.integrate import quad_vec

from oulab.model import (
    AssumptionFailure,
    DegenerateModelError,
    ModelSpec,
    check_theorem_conditions,
    covariance_at,
    derive,
    random_model,
    semigroup_norm_Hinf,
)
from oulab.numkit import expm, solve_lyapunov


def test_scalar_classical_model():
    dm = derive(ModelSpec([[-1.0]], [[1.0]]))
    assert dm.Qinf[0, 0] == pytest.approx(0.5)
    assert dm.B[0, 0] == pytest.approx(-0.5)
    assert dm.omega == pytest.approx(1.0)
    assert all(dm.flags.values())


def test_decoupled_diagonal_model():
    dm = derive(ModelSpec(np.diag([-1.0, -3.0]), np.eye(2)))
    np.testing.assert_allclose(dm.Qinf, np.diag([0.5, 1 / 6]), atol=1e-15)
    np.testing.assert_allclose(dm.B, -0.5 * np.eye(2), atol=1e-15)
    assert dm.omega == pytest.approx(1.0)


def test_jordan_model_against_lyapunov_oracle():
    A = np.array([[-1.0, 1.0], [0.0, -1.0]])
    dm = derive(ModelSpec(A, np.eye(2)))
    ref = scipy.linalg.solve_continuous_lyapunov(A, -np.eye(2))
    np.testing.assert_allclose(dm.Qinf, ref, atol=1e-14)
    np.testing.assert_allclose(dm.B, A @ ref, atol=1e-14)
    np.testing.assert_allclose(dm.B + dm.B.T, -np.eye(2), atol=1e-14)


def test_non_hurwitz_is_assumption_failure():
    with pytest.raises(AssumptionFailure):
        derive(ModelSpec([[0.5]], [[1.0]]))


def test_spec_validation():
    with pytest.raises(ValueError, match="full column rank"):
        ModelSpec(-np.eye(2), np.array([[1.0, 1.0], [1.0, 1.0]]))
    with pytest.raises(ValueError):
        ModelSpec(-np.eye(2), np.ones((3, 1)))
    with pytest.raises(ValueError):
        ModelSpec([[np.nan]], [[1.0]])


def test_json_round_trip_flat_and_nested():
    spec = ModelSpec(np.array([[-1.0, 2.0], [0.0, -3.0]]), np.array([[1.0], [0.5]]), label="x")
    obj = json.loads(json.dumps(spec.to_json()))
    assert obj["A"] == [-1.0, 2.0, 0.0, -3.0]
    back = ModelSpec.from_json(obj)
    np.testing.assert_array_equal(back.A, spec.A)
    np.testing.assert_array_equal(back.i, spec.i)
    nested = ModelSpec.from_json({"A": [[-1.0, 2.0], [0.0, -3.0]], "i": [[1.0], [0.5]]})
    np.testing.assert_array_equal(nested.i, spec.i)
    with pytest.raises(ValueError):
        ModelSpec.from_json({"A": [-1.0], "i": [1.0], "d": 2})


def test_covariance_at_examples():
    dm = derive(ModelSpec([[-1.0]], [[1.0]]))
    assert np.array_equal(covariance_at(dm, 0.0), np.zeros((1, 1)))
    for t in (0.3, 1.0, 4.0):
        assert covariance_at(dm, t)[0, 0] == pytest.approx(0.5 * (1 - math.exp(-2 * t)), rel=1e-13)
    with pytest.raises(ValueError):
        covariance_at(dm, -1.0)


def test_covariance_at_matches_quadrature():
    dm = derive(random_model(np.random.default_rng(3), 3))
    ref, _ = quad_vec(lambda s: scipy.linalg.expm(s * dm.A) @ dm.Q @ scipy.linalg.expm(s * dm.A).T, 0, 1,
                      epsabs=1e-13, epsrel=1e-13)
    assert np.abs(covariance_at(dm, 1.0) - ref).max() <= 1e-6


def test_covariance_monotone_and_limit():
    dm = derive(random_model(np.random.default_rng(4), 3))
    prev = covariance_at(dm, 0.0)
    for t in (0.1, 0.5, 1.0, 3.0):
        cur = covariance_at(dm, t)
        assert np.linalg.eigvalsh(cur - prev).min() >= -1e-12
        prev = cur
    assert np.abs(covariance_at(dm, 60.0) - dm.Qinf).max() <= 1e-10


def test_semigroup_norm_examples():
    dm = derive(ModelSpec(-np.eye(2), np.eye(2)))
    assert semigroup_norm_Hinf(dm, 0.0) == pytest.approx(1.0)
    assert semigroup_norm_Hinf(dm, 2.0) == pytest.approx(math.exp(-2.0))
    jd = derive(ModelSpec([[-1.0, 1.0], [0.0, -1.0]], np.eye(2)))
    W = jd.whitening
    for t in (0.5, 1.0, 2.0):
        # independent route: S_inf(t) = Q^{-1/2} e^{tA} Q^{1/2} in the original basis
        M = np.linalg.pinv(W) @ scipy.linalg.expm(t * jd.A) @ W
        ref = np.linalg.svd(M, compute_uv=False)[0]
        assert semigroup_norm_Hinf(jd, t) == pytest.approx(ref, rel=1e-12)
        assert ref <= math.exp(-jd.omega * t) * (1 + 1e-12)


@given(st.integers(0, 10_000), st.integers(1, 5), st.floats(0.3, 3.0))
def test_derived_invariants(seed, d, nonnormal):
    rng = np.random.default_rng(seed)
    dm = derive(random_model(rng, d, nonnormal=nonnormal))
    assert np.linalg.norm(dm.A @ dm.Qinf + dm.Qinf @ dm.A.T + dm.Q) <= 1e-9 * np.linalg.norm(dm.Q)
    assert np.linalg.norm(dm.B + dm.B.T + np.eye(d)) <= 1e-10
    for t in rng.uniform(0, 10, 50):
        assert semigroup_norm_Hinf(dm, t) <= math.exp(-dm.omega * t) * (1 + 1e-8)
    R = dm.QinfFactor.root
    t = float(rng.uniform(0, 3))
    # similarity consistency, whitened coordinates mapped back
    W = dm.whitening
    assert np.linalg.norm(W @ expm(dm.Atilde_inf, t) - expm(dm.A, t) @ W) <= 1e-9 * max(1, np.linalg.norm(R))
    assert np.linalg.norm(covariance_at(dm, t) + expm(dm.A, t) @ dm.Qinf @ expm(dm.A, t).T - dm.Qinf) <= 1e-9


def test_conditions_classical():
    rep = check_theorem_conditions(derive(ModelSpec(-np.eye(2), np.eye(2))))
    assert rep.all_hold
    assert rep["embedding_Hinf_in_H"].value == pytest.approx(1 / math.sqrt(2))
    assert rep["compact_S_H"].note == "automatic (finite rank)"
    assert rep["poincare_p2"].value == pytest.approx(1 / math.sqrt(2))


def test_conditions_stability_margin_cross_checked_with_decay_fit():
    dm = derive(random_model(np.random.default_rng(8), 3, nonnormal=2.0))
    rep = check_theorem_conditions(dm)
    margin = rep["contraction_margin_S_H"].value
    AH = dm.Atilde_H
    assert margin == pytest.approx(-0.5 * np.linalg.eigvalsh(AH + AH.T)[-1])
    ts = np.linspace(0.5, 6.0, 12)
    norms = np.array([np.linalg.norm(scipy.linalg.expm(t * AH), 2) for t in ts])
    # a contraction margin can never beat the sampled norm decay
    assert np.all(norms <= np.exp(-margin * ts) * (1 + 1e-10))
    fitted = float(rep["exp_stable_S_H"].note.rsplit(" ", 1)[1])
    assert fitted == pytest.approx(rep["exp_stable_S_H"].value, rel=0.1)


def test_degenerate_model_flags_and_refusals():
    dm = derive(ModelSpec(np.diag([-1.0, -2.0]), np.array([[1.0], [0.0]])))
    assert not dm.flags["kalman_rank_full"]
    assert not dm.flags["qinf_nondegenerate"]
    assert dm.B is None and dm.Atilde_H is None
    rep = check_theorem_conditions(dm)
    assert rep["h_inf_degenerate"].holds is False
    with pytest.raises(DegenerateModelError):
        dm.Qinf_inv
    with pytest.raises(DegenerateModelError):
        dm.S_H(1.0)


def test_degenerate_noise_with_full_kalman_rank():
    dm = derive(ModelSpec(np.array([[0.0, 1.0], [-1.0, -1.0]]), np.array([[0.0], [1.0]])))
    assert dm.flags["kalman_rank_full"] and dm.nondegenerate
    assert not dm.full_noise
    assert dm.omega == 0.0
    np.testing.assert_allclose(dm.Qinf, solve_lyapunov(dm.A, dm.Q))
