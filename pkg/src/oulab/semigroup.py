"""The Ornstein-Uhlenbeck semigroup via the Mehler formula.

``P(t) f(x) = E f(e^{tA} x + Z)`` with ``Z ~ N(0, Q_t)``. On polynomials this
is evaluated exactly: smooth ``f`` by the Gaussian heat operator with
covariance ``Q_t``, then compose with ``e^{tA}``. Other functions go through
Gauss-Hermite quadrature or seeded Monte Carlo.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .calculus import SmoothFunction, TestFunction, VectorTestFunction
from .model import DegenerateModelError, DerivedModel, covariance_at
from .numkit import SpdFactor, expm, spd_factor
from .polynomial import GaussianMoments, Polynomial, hermite_in_form
from .sampling import (
    Budget,
    Estimate,
    QuadratureOrderError,
    gauss_hermite_rule,
    gaussian_mc,
    gaussian_mc_stats,
    gaussian_qmc,
    gaussian_quadrature,
)

__all__ = [
    "GaussianMeasure",
    "ChaosIndex",
    "UnsupportedModelError",
    "mehler_polynomial",
    "apply_P",
    "invariance_defect",
    "apply_tensor_P",
    "tensor_P_polynomial",
    "chaos_eigenfunction",
    "chaos_eigencheck",
    "DecayScan",
    "decay_scan",
    "as_budget",
    "default_order",
]


class UnsupportedModelError(ValueError):
    """The requested structure does not exist for this model (e.g. non-symmetric chaos)."""


@dataclass(frozen=True)
class GaussianMeasure:
    mean: np.ndarray
    covariance: np.ndarray
    factor: SpdFactor

    @classmethod
    def centred(cls, covariance) -> "GaussianMeasure":
        cov = np.asarray(covariance, dtype=float)
        return cls(mean=np.zeros(cov.shape[0]), covariance=cov, factor=spd_factor(cov))

    @classmethod
    def invariant(cls, dm: DerivedModel) -> "GaussianMeasure":
        return cls(mean=np.zeros(dm.d), covariance=dm.Qinf, factor=dm.QinfFactor)

    @classmethod
    def transition(cls, dm: DerivedModel, t: float, x) -> "GaussianMeasure":
        """Law of ``U(t, x)``."""
        Qt = covariance_at(dm, t)
        return cls(mean=expm(dm.A, t) @ np.asarray(x, dtype=float), covariance=Qt, factor=spd_factor(Qt))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.standard_normal((n, len(self.mean))) @ self.factor.root.T + self.mean


@dataclass(frozen=True)
class ChaosIndex:
    multi_index: tuple

    def __post_init__(self):
        idx = tuple(int(k) for k in self.multi_index)
        if any(k < 0 for k in idx):
            raise ValueError("chaos index entries must be non-negative")
        object.__setattr__(self, "multi_index", idx)

    @property
    def total(self) -> int:
        return sum(self.multi_index)


def as_budget(scheme) -> Budget:
    if isinstance(scheme, Budget):
        return scheme
    if scheme is None:
        return Budget()
    return Budget(scheme=str(scheme))


def default_order(f, d: int) -> int:
    if isinstance(f, Polynomial):
        return f.degree // 2 + 1
    return {1: 40, 2: 24, 3: 12}.get(d, 8)


def mehler_polynomial(dm: DerivedModel, t: float, f: Polynomial) -> Polynomial:
    """``P(t) f`` as a polynomial (exact)."""
    if t < 0:
        raise ValueError("t must be non-negative")
    if t == 0:
        return f
    return f.heat(covariance_at(dm, t)).compose_linear(expm(dm.A, t))


def _points(x, d: int) -> tuple[np.ndarray, bool]:
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != d:
        raise ValueError(f"points have dimension {X.shape[1]}, expected {d}")
    return X, single


def _shifted_fn(f, shifts: np.ndarray):
    n, d = shifts.shape

    def fn(Y):
        pts = (Y[:, None, :] + shifts[None, :, :]).reshape(-1, d)
        return np.asarray(f(pts), dtype=float).reshape(Y.shape[0], n)

    return fn


def _transition_expectation(dm: DerivedModel, t: float, f, X: np.ndarray, budget: Budget):
    """``E f(e^{tA} x + Z)`` for each row of ``X``: returns ``(values, stderrs, n, scheme)``."""
    shifts = X @ expm(dm.A, t).T
    Qt = covariance_at(dm, t)
    fn = _shifted_fn(f, shifts)
    if budget.scheme == "quadrature":
        order = budget.order or default_order(f, dm.d)
        deg = f.degree if isinstance(f, Polynomial) else None
        est = gaussian_quadrature(fn, Qt, order, poly_degree=deg)
    elif budget.scheme == "qmc":
        est = gaussian_qmc(fn, Qt, budget.n_samples, budget.seed, budget.replicates)
    else:
        est = gaussian_mc(fn, Qt, budget.n_samples, budget.seed)
    return est


def apply_P(dm: DerivedModel, t: float, f: TestFunction, x, scheme="exact") -> Estimate:
    """Estimate ``P(t) f(x)`` at one point (``(d,)``) or a batch (``(n, d)``).

    ``scheme="exact"`` needs a polynomial and returns the exact value. The
    quadrature scheme refuses orders too low to integrate a polynomial exactly.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    budget = as_budget(scheme)
    X, single = _points(x, dm.d)
    if budget.scheme == "exact":
        if not isinstance(f, Polynomial):
            raise TypeError("exact scheme needs a polynomial test function")
        vals = mehler_polynomial(dm, t, f)(X)
        return Estimate.exact(float(vals[0]) if single else vals)
    if t == 0:
        vals = np.asarray(f(X), dtype=float)
        return Estimate(value=float(vals[0]) if single else vals,
                        stderr=0.0 if single else np.zeros_like(vals),
                        n_samples=0, seed=budget.seed if budget.scheme != "quadrature" else None,
                        scheme=budget.scheme)
    est = _transition_expectation(dm, t, f, X, budget)
    if single:
        return Estimate(value=float(np.ravel(est.value)[0]), stderr=float(np.ravel(est.stderr)[0]),
                        n_samples=est.n_samples, seed=est.seed, scheme=est.scheme)
    return est


def invariance_defect(dm: DerivedModel, t: float, f: TestFunction, budget="exact") -> Estimate:
    """Estimate ``int P(t) f dmu_inf - int f dmu_inf`` (zero by invariance).

    The Monte Carlo path pairs ``X ~ mu_inf`` with ``Y = e^{tA} X + Z`` so the
    two integrals share their draws.
    """
    budget = as_budget(budget)
    if t < 0:
        raise ValueError("t must be non-negative")
    if t == 0:
        return Estimate(0.0, 0.0, 0, budget.seed if budget.scheme in ("mc", "qmc") else None,
                        budget.scheme)
    if budget.scheme == "exact":
        if not isinstance(f, Polynomial):
            raise TypeError("exact scheme needs a polynomial test function")
        mom = GaussianMoments(dm.Qinf)
        return Estimate.exact(mom.expect(mehler_polynomial(dm, t, f)) - mom.expect(f))
    d = dm.d
    S = expm(dm.A, t)
    Qt = covariance_at(dm, t)
    joint = np.zeros((2 * d, 2 * d))
    joint[:d, :d] = dm.Qinf
    joint[d:, d:] = Qt

    def fn(XZ):
        Xs, Zs = XZ[:, :d], XZ[:, d:]
        return np.asarray(f(Xs @ S.T + Zs), dtype=float) - np.asarray(f(Xs), dtype=float)

    if budget.scheme == "quadrature":
        deg = f.degree if isinstance(f, Polynomial) else None
        return gaussian_quadrature(fn, joint, budget.order or default_order(f, 2 * d), poly_degree=deg)
    if budget.scheme == "qmc":
        return gaussian_qmc(fn, joint, budget.n_samples, budget.seed, budget.replicates)
    return gaussian_mc(fn, joint, budget.n_samples, budget.seed)


def tensor_P_polynomial(dm: DerivedModel, t: float, F: VectorTestFunction) -> VectorTestFunction:
    """``(P(t) (x) S_H^*(t)) F`` for a polynomial field, exactly."""
    dm.require_full_noise()
    M = expm(dm.Atilde_H.T, t)
    comps = [mehler_polynomial(dm, t, c) for c in F.components]
    out = []
    for a in range(F.m):
        acc = Polynomial.zero(F.d)
        for b in range(F.m):
            if M[a, b] != 0.0:
                acc = acc + comps[b] * M[a, b]
        out.append(acc)
    return VectorTestFunction(tuple(out))


def apply_tensor_P(dm: DerivedModel, t: float, F: VectorTestFunction, x, scheme="exact") -> Estimate:
    """``e^{t Atilde_H^T} [P(t) F_k(x)]_k``; needs nondegenerate noise (``m == d``)."""
    dm.require_full_noise()
    if F.m != dm.m:
        raise ValueError(f"field has {F.m} components, model has m={dm.m}")
    budget = as_budget(scheme)
    X, single = _points(x, dm.d)
    M = expm(dm.Atilde_H.T, t)
    if budget.scheme == "exact":
        if not F.is_polynomial:
            raise TypeError("exact scheme needs polynomial components")
        vals = np.stack([mehler_polynomial(dm, t, c)(X) for c in F.components], axis=-1) @ M.T
        return Estimate.exact(vals[0] if single else vals)

    def field_fn(pts):
        return F(pts) @ M.T

    if t == 0:
        vals = field_fn(X)
        return Estimate(vals[0] if single else vals, np.zeros_like(vals[0] if single else vals), 0,
                        budget.seed if budget.scheme != "quadrature" else None, budget.scheme)
    S = expm(dm.A, t)
    shifts = X @ S.T
    Qt = covariance_at(dm, t)
    n, d = shifts.shape

    def fn(Y):
        pts = (Y[:, None, :] + shifts[None, :, :]).reshape(-1, d)
        return field_fn(pts).reshape(Y.shape[0], n * F.m)

    if budget.scheme == "quadrature":
        deg = max(c.degree for c in F.components) if F.is_polynomial else None
        est = gaussian_quadrature(fn, Qt, budget.order or default_order(F.components[0], d), poly_degree=deg)
    elif budget.scheme == "qmc":
        est = gaussian_qmc(fn, Qt, budget.n_samples, budget.seed, budget.replicates)
    else:
        est = gaussian_mc(fn, Qt, budget.n_samples, budget.seed)
    val = np.asarray(est.value).reshape(n, F.m)
    se = np.asarray(est.stderr).reshape(n, F.m)
    return Estimate(val[0] if single else val, se[0] if single else se, est.n_samples, est.seed, est.scheme)


# chaos ---------------------------------------------------------------------------

def _symmetric_whitened(dm: DerivedModel, tol: float = 1e-10):
    dm.require_nondegenerate()
    At = dm.Atilde_inf
    asym = np.linalg.norm(At - At.T, 2)
    if asym > tol * max(1.0, np.linalg.norm(At, 2)):
        raise UnsupportedModelError(
            f"whitened drift is not symmetric (asymmetry {asym:.3e}); chaos basis is not an eigenbasis")
    lam, U = np.linalg.eigh(0.5 * (At + At.T))
    return lam, U


def chaos_eigenfunction(dm: DerivedModel, idx: ChaosIndex | Sequence[int]) -> tuple[Polynomial, float]:
    """Product Hermite function in whitened eigencoordinates and its decay exponent.

    Returns ``(h, kappa)`` with ``P(t) h = exp(kappa t) h``. Eigenvalues of the
    whitened drift are ordered ascending, so the last coordinate is the
    slowest mode.
    """
    idx = idx if isinstance(idx, ChaosIndex) else ChaosIndex(tuple(idx))
    if len(idx.multi_index) != dm.d:
        raise ValueError(f"chaos index has length {len(idx.multi_index)}, model d={dm.d}")
    lam, U = _symmetric_whitened(dm)
    # eta_k = <v_k, x> with v_k = V s^{-1/2} U_k, so A^T v_k = lam_k v_k and <Q_inf v_k, v_k> = 1
    fac = dm.QinfFactor
    W = fac.range_basis / np.sqrt(fac.range_eigenvalues)[None, :]
    h = Polynomial.constant(1.0, dm.d)
    for k, n_k in enumerate(idx.multi_index):
        if n_k:
            h = h * hermite_in_form(n_k, W @ U[:, k])
    kappa = float(sum(n_k * lam[k] for k, n_k in enumerate(idx.multi_index)))
    return h, kappa


def chaos_eigencheck(dm: DerivedModel, idx: ChaosIndex | Sequence[int], t: float,
                     n_points: int = 32, seed: int = 0) -> float:
    """``max |P(t) h(x) - e^{t kappa} h(x)|`` over points drawn from ``mu_inf``."""
    h, kappa = chaos_eigenfunction(dm, idx)
    X = GaussianMeasure.invariant(dm).sample(np.random.default_rng(seed), n_points)
    lhs = mehler_polynomial(dm, t, h)(X)
    rhs = math.exp(kappa * t) * h(X)
    return float(np.max(np.abs(lhs - rhs)))


# decay -----------------------------------------------------------------------------

@dataclass
class DecayScan:
    p: float
    rows: list = field(default_factory=list)  # (t, Estimate)
    rate: float = math.nan
    theta_fit: float = math.nan
    omega: float = math.nan
    monotone: bool = True
    label: str = ""

    @property
    def decay_ok(self) -> bool:
        return self.theta_fit > 0.0 if self.omega > 0 else self.rate > 0.0

    def to_dict(self) -> dict:
        return {
            "label": self.label, "p": self.p, "rate": self.rate, "theta_fit": self.theta_fit,
            "omega": self.omega, "monotone": self.monotone,
            "rows": [{"t": t, **e.to_dict()} for t, e in self.rows],
        }


def _pth_root_estimate(m: float, se: float, p: float, est: Estimate) -> Estimate:
    val = max(m, 0.0) ** (1.0 / p)
    d = (1.0 / p) * max(m, 1e-300) ** (1.0 / p - 1.0)
    return Estimate(val, float(d * se), est.n_samples, est.seed, est.scheme)


def _norm_of_values(vals_fn, dm: DerivedModel, p: float, budget: Budget) -> Estimate:
    """``(E |g|^p)^{1/p}`` under ``mu_inf`` where ``vals_fn`` maps points to ``g`` values."""
    fn = lambda X: np.abs(vals_fn(X)) ** p  # noqa: E731
    if budget.scheme == "qmc":
        est = gaussian_qmc(fn, dm.Qinf, budget.n_samples, budget.seed, budget.replicates)
    elif budget.scheme == "quadrature":
        est = gaussian_quadrature(fn, dm.Qinf, budget.order or 12)
    else:
        est = gaussian_mc(fn, dm.Qinf, budget.n_samples, budget.seed)
    return _pth_root_estimate(float(est.value), float(est.stderr), p, est)


def semigroup_values(dm: DerivedModel, t: float, f: TestFunction, order: int | None = None):
    """Callable ``X -> P(t) f(X)``: exact for polynomials, Gauss-Hermite inner integral otherwise."""
    if isinstance(f, Polynomial):
        return mehler_polynomial(dm, t, f)
    if t == 0:
        return f
    S = expm(dm.A, t)
    Qt = covariance_at(dm, t)
    order = order or default_order(f, dm.d)
    nodes, weights = gauss_hermite_rule(order, dm.d)
    Z = nodes @ spd_factor(Qt).root.T

    def values(X):
        X = np.atleast_2d(X)
        out = np.empty(X.shape[0])
        step = max(1, 200_000 // len(weights))
        for s in range(0, X.shape[0], step):
            base = X[s:s + step] @ S.T
            pts = (base[:, None, :] + Z[None]).reshape(-1, dm.d)
            out[s:s + step] = np.asarray(f(pts)).reshape(base.shape[0], -1) @ weights
        return out

    return values


def decay_scan(dm: DerivedModel, f: TestFunction, p: float, times: Sequence[float],
               budget="exact", label: str = "", inner_order: int | None = None) -> DecayScan:
    """``||P(t) f||_p`` over a time grid after removing the mean of ``f``.

    ``rate`` is the least-squares slope of ``-log ||P(t) f||_p``; ``theta_fit``
    is the largest ``theta`` in ``(0, 1]`` with
    ``||P(t) f||_p <= exp(-theta omega t) ||f||_p`` on the grid.
    """
    if not 1.0 < p < math.inf:
        raise ValueError(f"p must lie in (1, inf), got {p}")
    budget = as_budget(budget)
    times = [float(t) for t in times]
    if any(t < 0 for t in times):
        raise ValueError("times must be non-negative")
    exact = budget.scheme == "exact"
    if exact and not (isinstance(f, Polynomial) and float(p).is_integer() and int(p) % 2 == 0):
        raise ValueError("exact decay scan needs a polynomial and an even integer p")

    mom = GaussianMoments(dm.Qinf)
    if isinstance(f, Polynomial):
        f0 = f - mom.expect(f)
    else:
        mean = gaussian_mc(lambda X: f(X), dm.Qinf, budget.n_samples, budget.seed + 7919).value \
            if budget.scheme in ("mc", "qmc") else gaussian_quadrature(lambda X: f(X), dm.Qinf,
                                                                       budget.order or 24).value
        f0 = SmoothFunction(value=lambda X, f=f, c=float(mean): f(X) - c, d=f.d,
                            grad=f.grad, bounded=f.bounded, label=f.label)

    scan = DecayScan(p=p, omega=dm.omega, label=label)
    for t in times:
        if exact:
            Pf = mehler_polynomial(dm, t, f0)
            est = Estimate.exact(mom.expect(Pf ** int(p)) ** (1.0 / p))
        else:
            est = _norm_of_values(semigroup_values(dm, t, f0, inner_order), dm, p, budget)
        scan.rows.append((t, est))

    ts = np.array(times)
    norms = np.array([float(e.value) for _, e in scan.rows])
    pos = norms > 0
    if pos.sum() >= 2:
        scan.rate = float(-np.polyfit(ts[pos], np.log(norms[pos]), 1)[0])
    base = norms[ts == 0][0] if np.any(ts == 0) else None
    if base is None and not exact:
        base = _norm_of_values(lambda X: f0(X), dm, p, budget).value
    elif base is None:
        base = mom.expect(f0 ** int(p)) ** (1.0 / p)
    scan.monotone = bool(np.all(np.diff(norms[np.argsort(ts)]) <= 1e-12 * max(1.0, base)))
    if dm.omega > 0:
        thetas = [-math.log(n / base) / (dm.omega * t) for t, n in zip(ts, norms) if t > 0 and n > 0]
        scan.theta_fit = float(min(1.0, min(thetas))) if thetas else math.nan
    return scan
