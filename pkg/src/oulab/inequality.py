"""L^p norms under the invariant measure and the Poincare-type inequalities.

Exact paths use Gaussian moment algebra (polynomials, even integer ``p``);
everything else is seeded Monte Carlo with delta-method standard errors.
Ratios share one sample set between numerator and denominator.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.linalg import eigh
from scipy.special import gammaln

from .calculus import (
    SmoothFunction,
    TestFunction,
    VectorTestFunction,
    divergence_H_poly,
    grad_H_field,
    pairing,
)
from .model import DerivedModel, covariance_at
from .numkit import expm, spd_factor, spectral_abscissa
from .polynomial import GaussianMoments, Polynomial, linear_form, random_polynomial
from .sampling import Budget, Estimate, gauss_hermite_rule, gaussian_mc, gaussian_mc_stats, gaussian_qmc
from .semigroup import as_budget, mehler_polynomial

__all__ = [
    "ExactSchemeError",
    "PoincareReport",
    "SharpnessResult",
    "GradientScan",
    "CounterexampleResult",
    "gaussian_abs_moment_root",
    "lp_norm",
    "poincare_ratio",
    "sharpness_search",
    "duality_identity_defect",
    "duality_convergence",
    "gradient_estimate_scan",
    "dhstar_poincare",
    "weighted_norm_counterexample",
    "dirichlet_laplacian",
    "write_reports_csv",
    "REPORT_COLUMNS",
]

REPORT_COLUMNS = ("label", "p", "ratio", "stderr", "bound", "n_samples", "seed")


class ExactSchemeError(ValueError):
    """The exact scheme was requested where moment algebra does not apply."""


def _even_integer(p: float) -> bool:
    return float(p).is_integer() and int(p) % 2 == 0


def _check_p(p: float) -> None:
    if not 1.0 < p < math.inf:
        raise ValueError(f"p must lie in (1, inf), got {p}")


def gaussian_abs_moment_root(p: float) -> float:
    """``(E |xi|^p)^{1/p}`` for a standard normal ``xi``."""
    return math.exp((0.5 * p * math.log(2.0) + gammaln(0.5 * (p + 1)) - 0.5 * math.log(math.pi)) / p)


# norms ---------------------------------------------------------------------------

def _abs_power_values(f, p: float) -> Callable[[np.ndarray], np.ndarray]:
    if isinstance(f, VectorTestFunction):
        return lambda X: np.sum(f(X) ** 2, axis=-1) ** (0.5 * p)
    return lambda X: np.abs(np.asarray(f(X), dtype=float)) ** p


def _exact_power(f, p: int) -> Polynomial:
    if isinstance(f, VectorTestFunction):
        return f.squared_norm() ** (p // 2)
    return f ** p


def _stochastic_mean(fn, dm: DerivedModel, budget: Budget) -> Estimate:
    if budget.scheme == "qmc":
        return gaussian_qmc(fn, dm.Qinf, budget.n_samples, budget.seed, budget.replicates)
    return gaussian_mc(fn, dm.Qinf, budget.n_samples, budget.seed)


def lp_norm(dm: DerivedModel, f, p: float, budget="exact", fallback: Budget | None = None) -> Estimate:
    """``(int |f|^p dmu_inf)^{1/p}`` for a scalar or ``H``-valued test function.

    The exact scheme requires a polynomial and an even integer ``p``; any
    other request is refused unless a stochastic ``fallback`` budget is given.
    """
    _check_p(p)
    budget = as_budget(budget)
    if budget.scheme == "exact":
        poly = f.is_polynomial if isinstance(f, VectorTestFunction) else isinstance(f, Polynomial)
        if poly and _even_integer(p):
            val = GaussianMoments(dm.Qinf).expect(_exact_power(f, int(p)))
            return Estimate.exact(max(val, 0.0) ** (1.0 / p))
        if fallback is None:
            raise ExactSchemeError(f"exact L^p norm needs a polynomial and even integer p (p={p})")
        budget = fallback
    if budget.scheme == "quadrature":
        raise ValueError("lp_norm supports exact, mc and qmc schemes")
    est = _stochastic_mean(_abs_power_values(f, p), dm, budget)
    m = max(float(est.value), 0.0)
    val = m ** (1.0 / p)
    se = (1.0 / p) * m ** (1.0 / p - 1.0) * float(est.stderr) if m > 0 else 0.0
    return Estimate(val, se, est.n_samples, est.seed, est.scheme)


def _mean_of(dm: DerivedModel, f, budget: Budget) -> float:
    if isinstance(f, Polynomial):
        return GaussianMoments(dm.Qinf).expect(f)
    # independent stream so the centring does not correlate with the ratio samples
    alt = Budget(budget.scheme if budget.scheme != "exact" else "mc", budget.n_samples,
                 budget.seed + 1_000_003, budget.order, budget.replicates)
    return float(_stochastic_mean(lambda X: np.asarray(f(X), dtype=float), dm, alt).value)


def _centred(f, c: float):
    if isinstance(f, Polynomial):
        return f - c
    return SmoothFunction(value=lambda X: np.asarray(f.value(X)) - c, d=f.d, grad=f.grad,
                          hessian=f.hessian, bounded=f.bounded, label=f.label)


def _gradient_field(dm: DerivedModel, f) -> VectorTestFunction | Callable:
    if isinstance(f, Polynomial):
        return grad_H_field(f, dm.i)
    return lambda X: np.atleast_2d(f.grad_at(X)) @ dm.i


def _shared_ratio(dm: DerivedModel, num, den, p: float, budget: Budget) -> Estimate:
    """``(E num / E den)^{1/p}`` from one sample set with a delta-method stderr."""
    fn = lambda X: np.column_stack([num(X), den(X)])  # noqa: E731
    if budget.scheme == "qmc":
        est = gaussian_qmc(fn, dm.Qinf, budget.n_samples, budget.seed, budget.replicates)
        a, b = (float(v) for v in est.value)
        # replicate spread of the ratio is not tracked separately; use the delta method on replicate stderrs
        ratio = (a / b) ** (1.0 / p)
        rel = math.hypot(est.stderr[0] / a, est.stderr[1] / b) / p
        return Estimate(ratio, ratio * rel, est.n_samples, est.seed, "qmc")
    n = budget.n_samples
    mean, C = gaussian_mc_stats(fn, dm.Qinf, n, budget.seed)
    a, b = float(mean[0]), float(mean[1])
    if b <= 0:
        raise ValueError("denominator vanishes on the sample set (zero gradient)")
    ratio = (max(a, 0.0) / b) ** (1.0 / p)
    var = (C[0, 0] / a**2 + C[1, 1] / b**2 - 2 * C[0, 1] / (a * b)) / n if a > 0 else 0.0
    return Estimate(ratio, ratio * math.sqrt(max(var, 0.0)) / p, n, budget.seed, "mc")


# Poincare ratios -------------------------------------------------------------------

@dataclass
class PoincareReport:
    p: float
    ratio: Estimate
    bound: float | None = None
    function_label: str = ""
    flagged: str = ""

    @property
    def within_bound(self) -> bool | None:
        if self.bound is None:
            return None
        return float(self.ratio.value) <= self.bound * (1 + 1e-8) + 3 * float(self.ratio.stderr)

    def to_dict(self) -> dict:
        out = {"label": self.function_label, "p": self.p, "ratio": self.ratio.to_dict(),
               "bound": self.bound, "within_bound": self.within_bound}
        if self.flagged:
            out["flagged"] = self.flagged
        return out

    def csv_row(self) -> list:
        r = self.ratio
        return [self.function_label, self.p, float(r.value), float(r.stderr),
                "" if self.bound is None else self.bound, r.n_samples, "" if r.seed is None else r.seed]


def write_reports_csv(path, reports: Iterable[PoincareReport]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(REPORT_COLUMNS)
        for rep in reports:
            w.writerow([repr(v) if isinstance(v, float) else v for v in rep.csv_row()])


def _p2_bound(dm: DerivedModel, p: float) -> float | None:
    if p != 2:
        return None
    return math.inf if dm.omega <= 0 else 1.0 / math.sqrt(2.0 * dm.omega)


def poincare_ratio(dm: DerivedModel, f: TestFunction, p: float, budget="exact",
                   label: str = "") -> PoincareReport:
    """``||f - mean f||_p / ||D_H f||_p`` under the invariant measure."""
    _check_p(p)
    budget = as_budget(budget)
    label = label or getattr(f, "label", "") or (repr(f) if isinstance(f, Polynomial) else "f")
    bound = _p2_bound(dm, p)
    if isinstance(f, Polynomial) and f.is_constant():
        seed = None if budget.scheme == "exact" else budget.seed
        scheme = budget.scheme if budget.scheme != "quadrature" else "exact"
        return PoincareReport(p, Estimate(0.0, 0.0, 0, seed, scheme), bound, label)
    f0 = _centred(f, _mean_of(dm, f, budget))
    G = _gradient_field(dm, f)
    if budget.scheme == "exact":
        if not (isinstance(f, Polynomial) and _even_integer(p)):
            raise ExactSchemeError("exact Poincare ratio needs a polynomial and even integer p")
        mom = GaussianMoments(dm.Qinf)
        num = mom.expect(f0 ** int(p))
        den = mom.expect(G.squared_norm() ** (int(p) // 2))
        if den <= 1e-300:
            return PoincareReport(p, Estimate.exact(math.inf), bound, label,
                                  flagged="non-constant f with vanishing D_H f")
        return PoincareReport(p, Estimate.exact((max(num, 0.0) / den) ** (1.0 / p)), bound, label)
    num = _abs_power_values(f0, p)
    den = _abs_power_values(G, p) if isinstance(G, VectorTestFunction) else \
        (lambda X: np.sum(G(X) ** 2, axis=-1) ** (0.5 * p))
    try:
        est = _shared_ratio(dm, num, den, p, budget)
    except ValueError as exc:
        return PoincareReport(p, Estimate(math.inf, 0.0, budget.n_samples, budget.seed, budget.scheme),
                              bound, label, flagged=str(exc))
    return PoincareReport(p, est, bound, label)


@dataclass
class SharpnessResult:
    best: PoincareReport
    linear_max: float
    maximizer: np.ndarray | None
    bound: float | None
    reports: list = field(default_factory=list)

    @property
    def attained_by_linear(self) -> bool:
        return abs(float(self.best.ratio.value) - self.linear_max) <= 1e-8 * max(1.0, self.linear_max)

    @property
    def within_bound(self) -> bool | None:
        if self.bound is None:
            return None
        return all(float(r.ratio.value) <= self.bound * (1 + 1e-8) + 3 * float(r.ratio.stderr)
                   for r in self.reports)

    def to_dict(self) -> dict:
        return {
            "best": self.best.to_dict(), "linear_max": self.linear_max,
            "maximizer": None if self.maximizer is None else self.maximizer.tolist(),
            "bound": self.bound, "attained_by_linear": self.attained_by_linear,
            "within_bound": self.within_bound, "n_candidates": len(self.reports),
        }


def sharpness_search(dm: DerivedModel, p: float = 2, degree_cap: int = 4, n_random: int = 20,
                     budget="exact", seed: int = 0) -> SharpnessResult:
    """Largest Poincare ratio over linear functionals (closed form) and random polynomials.

    For ``f = <x, u>`` the ratio is ``c_p sqrt(<Q_inf u, u> / <Q u, u>)`` with
    ``c_p = (E|xi|^p)^{1/p}``, maximized by the top generalized eigenvector of
    ``(Q_inf, Q)``.
    """
    _check_p(p)
    budget = as_budget(budget)
    dm.require_nondegenerate()
    bound = _p2_bound(dm, p)
    cp = gaussian_abs_moment_root(p)
    if dm.full_noise:
        w, V = eigh(dm.Qinf, dm.Q)
        u = V[:, -1] / np.linalg.norm(V[:, -1])
        linear_max = cp * math.sqrt(w[-1])
    else:
        # directions invisible to i carry variance but no gradient
        u = np.linalg.svd(dm.i.T)[2][-1]
        linear_max = math.inf
    lin = linear_form(u, dm.d)
    if math.isfinite(linear_max) and (budget.scheme == "exact" and _even_integer(p)):
        lin_rep = poincare_ratio(dm, lin, p, budget, label="linear maximizer")
    else:
        seed_ = None if budget.scheme == "exact" else budget.seed
        lin_rep = PoincareReport(p, Estimate(linear_max, 0.0, 0, seed_,
                                             budget.scheme if budget.scheme != "quadrature" else "exact"),
                                 bound, "linear maximizer (closed form)")
    reports = [lin_rep]
    rng = np.random.default_rng(seed)
    for k in range(n_random):
        deg = 1 + k % degree_cap
        g = random_polynomial(rng, dm.d, deg, density=0.7)
        if g.is_constant():
            continue
        reports.append(poincare_ratio(dm, g, p, budget, label=f"random degree {deg} #{k}"))
    best = max(reports, key=lambda r: float(r.ratio.value))
    return SharpnessResult(best=best, linear_max=linear_max, maximizer=u, bound=bound, reports=reports)


# duality integral --------------------------------------------------------------------

def _rule(name: str, t: float, steps: int) -> tuple[np.ndarray, np.ndarray]:
    if steps < 1:
        raise ValueError("need at least one quadrature step")
    if name == "midpoint":
        h = t / steps
        return (np.arange(steps) + 0.5) * h, np.full(steps, h)
    if name == "simpson":
        n = steps + steps % 2
        s = np.linspace(0.0, t, n + 1)
        w = np.ones(n + 1)
        w[1:-1:2] = 4.0
        w[2:-1:2] = 2.0
        return s, w * (t / n) / 3.0
    if name == "gauss":
        x, w = np.polynomial.legendre.leggauss(steps)
        return 0.5 * t * (x + 1.0), 0.5 * t * w
    raise ValueError(f"unknown quadrature rule {name!r}")


def duality_identity_defect(dm: DerivedModel, f: Polynomial, g: Polynomial, t: float,
                            quad_steps: int = 256, rule: str = "simpson") -> float:
    """``|<f, g - P(t) g> + int_0^t int <D_H P(s) g, B D_H f> dmu_inf ds|``.

    The left side is exact; the time integral uses the chosen rule on exact
    integrands. ``g`` is centred first.
    """
    dm.require_nondegenerate()
    dm.require_full_noise()
    if t < 0:
        raise ValueError("t must be non-negative")
    mom = GaussianMoments(dm.Qinf)
    g = g - mom.expect(g)
    if t == 0:
        return 0.0
    lhs = mom.expect(f * (g - mehler_polynomial(dm, t, g)))
    Df = grad_H_field(f, dm.i)
    s_nodes, weights = _rule(rule, t, quad_steps)
    integrand = np.array([
        pairing(dm, grad_H_field(mehler_polynomial(dm, float(s), g), dm.i), Df, M=dm.B, moments=mom)
        for s in s_nodes
    ])
    rhs = -float(weights @ integrand)
    return abs(lhs - rhs)


def duality_convergence(dm: DerivedModel, f: Polynomial, g: Polynomial, t: float,
                        steps: Sequence[int] = (4, 8, 16, 32), rule: str = "midpoint") -> dict:
    """Defects under step halving and the observed orders ``log2(e_h / e_{h/2})``."""
    defects = [duality_identity_defect(dm, f, g, t, n, rule) for n in steps]
    orders = [math.log2(a / b) if a > 0 and b > 0 else math.inf for a, b in zip(defects, defects[1:])]
    return {"rule": rule, "steps": list(steps), "defects": defects, "orders": orders}


# gradient estimate -------------------------------------------------------------------

@dataclass
class GradientScan:
    q: float
    rows: list = field(default_factory=list)  # (t, Estimate of sqrt(t)||D_H P(t) f||_q / ||f||_q)
    label: str = ""

    @property
    def constant(self) -> float:
        return max(float(e.value) for _, e in self.rows) if self.rows else 0.0

    def bounded(self, factor: float = 3.0, reference_t: float = 0.25) -> bool:
        """No value exceeds ``factor`` times the value nearest ``reference_t`` (plus 3 stderr)."""
        ts = np.array([t for t, _ in self.rows])
        ref = self.rows[int(np.argmin(np.abs(ts - reference_t)))][1]
        lim = factor * float(ref.value) + 3 * float(ref.stderr)
        return all(float(e.value) <= lim + 3 * float(e.stderr) + 1e-14 for _, e in self.rows)

    def to_dict(self) -> dict:
        return {"label": self.label, "q": self.q, "constant": self.constant, "bounded": self.bounded(),
                "rows": [{"t": t, **e.to_dict()} for t, e in self.rows]}


def _smooth_grad_semigroup(dm: DerivedModel, t: float, f: SmoothFunction, order: int):
    """``X -> D_H P(t) f(X) = i^T e^{tA^T} E grad f(e^{tA} X + Z)`` via Gauss-Hermite in ``Z``."""
    S = expm(dm.A, t)
    nodes, weights = gauss_hermite_rule(order, dm.d)
    Z = nodes @ spd_factor(covariance_at(dm, t)).root.T
    M = dm.i.T @ S.T

    def values(X):
        X = np.atleast_2d(X)
        out = np.empty((X.shape[0], dm.m))
        step = max(1, 100_000 // len(weights))
        for s in range(0, X.shape[0], step):
            base = X[s:s + step] @ S.T
            pts = (base[:, None, :] + Z[None]).reshape(-1, dm.d)
            g = f.grad_at(pts).reshape(base.shape[0], len(weights), dm.d)
            out[s:s + step] = np.einsum("k,nkd->nd", weights, g) @ M.T
        return out

    return values


def gradient_estimate_scan(dm: DerivedModel, f: TestFunction, q: float, times: Sequence[float],
                           budget="exact", label: str = "", inner_order: int | None = None) -> GradientScan:
    """``sqrt(t) ||D_H P(t) f||_q / ||f||_q`` over a grid in ``(0, 1]``."""
    _check_p(q)
    budget = as_budget(budget)
    times = [float(t) for t in times]
    if any(t <= 0 for t in times):
        raise ValueError("gradient scan needs t > 0")
    scan = GradientScan(q=q, label=label or getattr(f, "label", ""))
    if budget.scheme == "exact":
        if not (isinstance(f, Polynomial) and _even_integer(q)):
            raise ExactSchemeError("exact gradient scan needs a polynomial and even integer q")
        mom = GaussianMoments(dm.Qinf)
        norm_f = mom.expect(f ** int(q)) ** (1.0 / q)
        if norm_f == 0:
            raise ValueError("f vanishes in L^q")
        for t in times:
            G = grad_H_field(mehler_polynomial(dm, t, f), dm.i)
            val = max(mom.expect(G.squared_norm() ** (int(q) // 2)), 0.0) ** (1.0 / q)
            scan.rows.append((t, Estimate.exact(math.sqrt(t) * val / norm_f)))
        return scan
    for t in times:
        if isinstance(f, Polynomial):
            G = grad_H_field(mehler_polynomial(dm, t, f), dm.i)
            num = lambda X, G=G: np.sum(G(X) ** 2, axis=-1) ** (0.5 * q)  # noqa: E731
        else:
            gv = _smooth_grad_semigroup(dm, t, f, inner_order or {1: 40, 2: 16, 3: 8}.get(dm.d, 5))
            num = lambda X, gv=gv: np.sum(gv(X) ** 2, axis=-1) ** (0.5 * q)  # noqa: E731
        den = _abs_power_values(f, q)
        est = _shared_ratio(dm, num, den, q, budget)
        st = math.sqrt(t)
        scan.rows.append((t, Estimate(st * float(est.value), st * float(est.stderr), est.n_samples,
                                      est.seed, est.scheme)))
    return scan


# D_H^* inequality --------------------------------------------------------------------

def dhstar_poincare(dm: DerivedModel, g: Polynomial, p: float, budget="exact", label: str = "") -> PoincareReport:
    """``||F||_p / ||D_H^* F||_p`` for the gradient field ``F = D_H g``."""
    _check_p(p)
    dm.require_full_noise()
    dm.require_nondegenerate()
    if not isinstance(g, Polynomial):
        raise TypeError("dhstar_poincare works on polynomial potentials")
    if g.is_constant():
        raise ValueError("constant g gives the zero field; ratio undefined")
    budget = as_budget(budget)
    label = label or repr(g)
    F = grad_H_field(g, dm.i)
    div = divergence_H_poly(dm, F)
    if budget.scheme == "exact":
        if not _even_integer(p):
            raise ExactSchemeError("exact D_H^* ratio needs an even integer p")
        mom = GaussianMoments(dm.Qinf)
        num = mom.expect(F.squared_norm() ** (int(p) // 2))
        den = mom.expect(div ** int(p))
        return PoincareReport(p, Estimate.exact((num / den) ** (1.0 / p)), None, label)
    est = _shared_ratio(dm, _abs_power_values(F, p), _abs_power_values(div, p), p, budget)
    return PoincareReport(p, est, None, label)


# weighted-norm counterexample -------------------------------------------------------------

def dirichlet_laplacian(dim: int) -> np.ndarray:
    """Central-difference Dirichlet Laplacian on ``(-1, 1)`` with spacing ``2/(dim+1)``."""
    h = 2.0 / (dim + 1)
    return (np.diag(np.full(dim, -2.0)) + np.diag(np.ones(dim - 1), 1) + np.diag(np.ones(dim - 1), -1)) / h**2


@dataclass
class CounterexampleResult:
    r_star: float | None
    f_witness: np.ndarray | None
    growth: float
    spectral_abscissa: float
    sweep: list  # (r, growth)
    monotone_after_onset: bool

    @property
    def stable(self) -> bool:
        return self.spectral_abscissa < 0

    @property
    def found(self) -> bool:
        return self.r_star is not None

    def to_dict(self) -> dict:
        return {
            "r_star": self.r_star, "growth": self.growth, "spectral_abscissa": self.spectral_abscissa,
            "stable": self.stable, "found": self.found, "monotone_after_onset": self.monotone_after_onset,
            "f_witness": None if self.f_witness is None else self.f_witness.tolist(),
            "sweep": [{"r": r, "growth": g} for r, g in self.sweep],
        }


def weighted_norm_counterexample(dim: int = 20, omega: float = 1.0, t0: float = 0.1,
                                 r_grid: Sequence[float] | None = None) -> CounterexampleResult:
    """Search for ``r`` making ``e^{t0 (Delta_h - omega)}`` expand some left-supported ``f``.

    The norm is ``||f||_(r)^2 = ||f on (-1,0)||^2 + r^2 ||f on (0,1)||^2``.
    For each ``r`` the largest growth over ``f`` supported in the left half is
    a singular value of ``W_r e^{t0 M}`` restricted to the left coordinates.
    """
    if dim < 8:
        raise ValueError("dim must be at least 8")
    if omega <= 0 or t0 <= 0:
        raise ValueError("omega and t0 must be positive")
    M = dirichlet_laplacian(dim) - omega * np.eye(dim)
    x = -1.0 + 2.0 * np.arange(1, dim + 1) / (dim + 1)
    left = x <= 0
    E = expm(M, t0)[:, left]
    grid = np.geomspace(1.0, 1e4, 81) if r_grid is None else np.asarray(sorted(r_grid), dtype=float)
    sweep = []
    r_star = witness = None
    best = 0.0
    for r in grid:
        w = np.where(left, 1.0, r)
        _, sv, Vt = np.linalg.svd(w[:, None] * E)
        g = float(sv[0])
        sweep.append((float(r), g))
        if r_star is None and g > 1.0:
            r_star, best = float(r), g
            witness = np.zeros(dim)
            witness[left] = Vt[0] * np.sign(Vt[0][np.argmax(np.abs(Vt[0]))])
    growths = np.array([g for _, g in sweep])
    if r_star is None:
        mono = True
        best = float(growths.max())
    else:
        after = growths[grid >= r_star]
        mono = bool(np.all(np.diff(after) >= -1e-12))
    return CounterexampleResult(r_star=r_star, f_witness=witness, growth=best,
                                spectral_abscissa=spectral_abscissa(M), sweep=sweep,
                                monotone_after_onset=mono)
