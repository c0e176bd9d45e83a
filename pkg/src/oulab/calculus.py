"""Test functions, the directional gradient D_H, its adjoint, and the generator L.

For ``f`` on R^d and injection ``i`` (d x m):

* ``D_H f(x) = i^T grad f(x)``
* ``D_H^* F(x) = <Q_inf^{-1} x, i F(x)> - div(i F)(x)`` (Gaussian integration by
  parts for ``N(0, Q_inf)``)
* ``L f(x) = <A x, grad f(x)> + 1/2 tr(Q hess f(x))``

With ``B = i^{-1} A Q_inf i^{-T}`` the weak form reads
``<L f, g> = int <D_H f, B D_H g> dmu_inf``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np

from .model import DerivedModel
from .polynomial import GaussianMoments, Polynomial, linear_form

__all__ = [
    "SmoothFunction",
    "VectorTestFunction",
    "TestFunction",
    "grad_H",
    "grad_H_field",
    "generator_L",
    "divergence_H",
    "divergence_H_poly",
    "form_identity_defect",
    "b_form_defect",
    "adjointness_defect",
    "pairing",
    "cosine_ridge",
    "tanh_ridge",
    "gaussian_bump",
]


@dataclass(frozen=True)
class SmoothFunction:
    """Non-polynomial test function with caller-supplied derivatives.

    ``value`` maps ``(n, d)`` points to ``(n,)``; ``grad`` to ``(n, d)``;
    ``hessian`` (optional) to ``(n, d, d)``.
    """

    value: Callable[[np.ndarray], np.ndarray]
    d: int
    grad: Callable[[np.ndarray], np.ndarray] | None = None
    hessian: Callable[[np.ndarray], np.ndarray] | None = None
    bounded: bool = False
    label: str = ""

    def __call__(self, x):
        X = np.asarray(x, dtype=float)
        out = np.asarray(self.value(np.atleast_2d(X)), dtype=float)
        return float(out[0]) if X.ndim == 1 else out

    def grad_at(self, x) -> np.ndarray:
        if self.grad is None:
            raise ValueError(f"{self.label or 'function'} has no gradient callback")
        X = np.asarray(x, dtype=float)
        out = np.asarray(self.grad(np.atleast_2d(X)), dtype=float)
        return out[0] if X.ndim == 1 else out

    def hessian_at(self, x) -> np.ndarray:
        if self.hessian is None:
            raise ValueError(f"{self.label or 'function'} has no Hessian callback")
        X = np.asarray(x, dtype=float)
        out = np.asarray(self.hessian(np.atleast_2d(X)), dtype=float)
        return out[0] if X.ndim == 1 else out


TestFunction = Union[Polynomial, SmoothFunction]


@dataclass(frozen=True)
class VectorTestFunction:
    """An ``H``-valued function given by ``m`` scalar components."""

    components: tuple

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise ValueError("need at least one component")
        dims = {c.d for c in comps}
        if len(dims) != 1:
            raise ValueError(f"components disagree on dimension: {sorted(dims)}")
        object.__setattr__(self, "components", comps)

    @property
    def d(self) -> int:
        return self.components[0].d

    @property
    def m(self) -> int:
        return len(self.components)

    @property
    def is_polynomial(self) -> bool:
        return all(isinstance(c, Polynomial) for c in self.components)

    def __call__(self, x) -> np.ndarray:
        X = np.asarray(x, dtype=float)
        return np.stack([np.asarray(c(X), dtype=float) for c in self.components], axis=-1)

    def squared_norm(self) -> Polynomial:
        if not self.is_polynomial:
            raise TypeError("squared_norm needs polynomial components")
        return sum((c * c for c in self.components[1:]), self.components[0] * self.components[0])


def _gradient(f: TestFunction, x) -> np.ndarray:
    return f.grad_at(x)


def grad_H(f: TestFunction, x, iMat) -> np.ndarray:
    """``i^T grad f(x)``; shape ``(m,)`` for one point, ``(n, m)`` for a batch."""
    return np.asarray(_gradient(f, x)) @ np.asarray(iMat, dtype=float)


def grad_H_field(f: Polynomial, iMat) -> VectorTestFunction:
    """``D_H f`` as a polynomial vector field."""
    iMat = np.asarray(iMat, dtype=float)
    grads = f.gradient()
    comps = []
    for k in range(iMat.shape[1]):
        comp = Polynomial.zero(f.d)
        for j in range(f.d):
            if iMat[j, k] != 0.0:
                comp = comp + grads[j] * iMat[j, k]
        comps.append(comp)
    return VectorTestFunction(tuple(comps))


def generator_L(dm: DerivedModel, f: Polynomial) -> Polynomial:
    """``<A x, grad f> + 1/2 tr(Q hess f)`` for polynomial ``f``."""
    if not isinstance(f, Polynomial):
        raise TypeError("generator_L is kept exact: polynomial input only")
    A, Q = dm.A, dm.Q
    grads = f.gradient()
    out = Polynomial.zero(f.d)
    for j in range(f.d):
        if grads[j].is_zero():
            continue
        for k in range(f.d):
            if A[j, k] != 0.0:
                out = out + grads[j].times_variable(k) * A[j, k]
            if Q[j, k] != 0.0:
                out = out + grads[j].diff(k) * (0.5 * Q[j, k])
    return out


def divergence_H_poly(dm: DerivedModel, F: VectorTestFunction) -> Polynomial:
    """``D_H^* F`` for a polynomial field ``F``."""
    dm.require_nondegenerate()
    if not F.is_polynomial:
        raise TypeError("divergence_H_poly needs polynomial components")
    if F.m != dm.m:
        raise ValueError(f"field has {F.m} components, model has m={dm.m}")
    iMat = dm.i
    Qinv = dm.Qinf_inv
    d = F.d
    iF = []
    for j in range(d):
        comp = Polynomial.zero(d)
        for k in range(F.m):
            if iMat[j, k] != 0.0:
                comp = comp + F.components[k] * iMat[j, k]
        iF.append(comp)
    out = Polynomial.zero(d)
    for j in range(d):
        wj = linear_form(Qinv[j], d)
        out = out + wj * iF[j] - iF[j].diff(j)
    return out


def divergence_H(dm: DerivedModel, F: VectorTestFunction, x) -> np.ndarray | float:
    """Pointwise ``D_H^* F(x)``.

    Smooth components must provide gradients; the divergence uses
    ``sum_jk i_jk d_j F_k``.
    """
    dm.require_nondegenerate()
    if F.is_polynomial:
        return divergence_H_poly(dm, F)(x)
    X = np.asarray(x, dtype=float)
    X2 = np.atleast_2d(X)
    vals = F(X2)  # (n, m)
    iF = vals @ dm.i.T  # (n, d)
    first = np.einsum("nj,nj->n", X2 @ dm.Qinf_inv, iF)
    div = np.zeros(X2.shape[0])
    for k, comp in enumerate(F.components):
        g = np.atleast_2d(comp.grad_at(X2))  # (n, d)
        div += g @ dm.i[:, k]
    out = first - div
    return float(out[0]) if X.ndim == 1 else out


def pairing(dm: DerivedModel, F: VectorTestFunction, G: VectorTestFunction, M=None,
            moments: GaussianMoments | None = None) -> float:
    """Exact ``int <F, M G> dmu_inf`` for polynomial fields (``M`` defaults to the identity)."""
    moments = moments or GaussianMoments(dm.Qinf)
    M = np.eye(F.m) if M is None else np.asarray(M, dtype=float)
    E = moments.gram(F.components, G.components)
    return float(np.sum(E * M))


def form_identity_defect(dm: DerivedModel, f: Polynomial, g: Polynomial) -> float:
    """``|<Lf, g> + <Lg, f> + int <D_H f, D_H g> dmu_inf|``, all terms exact."""
    dm.require_nondegenerate()
    mom = GaussianMoments(dm.Qinf)
    lhs = mom.expect(generator_L(dm, f) * g) + mom.expect(generator_L(dm, g) * f)
    rhs = -pairing(dm, grad_H_field(f, dm.i), grad_H_field(g, dm.i), moments=mom)
    return abs(lhs - rhs)


def b_form_defect(dm: DerivedModel, f: Polynomial, g: Polynomial) -> float:
    """``|<Lf, g> - int <D_H f, B D_H g> dmu_inf|``, all terms exact.

    The orientation is the one under which the identity holds for every pair;
    at ``f == g`` it reduces to the symmetric form identity because
    ``B + B^T = -I``.
    """
    dm.require_nondegenerate()
    dm.require_full_noise()
    mom = GaussianMoments(dm.Qinf)
    lhs = mom.expect(generator_L(dm, f) * g)
    rhs = pairing(dm, grad_H_field(f, dm.i), grad_H_field(g, dm.i), M=dm.B, moments=mom)
    return abs(lhs - rhs)


def adjointness_defect(dm: DerivedModel, f: Polynomial, F: VectorTestFunction) -> float:
    """``|int <D_H f, F> dmu - int f D_H^* F dmu|`` exactly."""
    mom = GaussianMoments(dm.Qinf)
    lhs = pairing(dm, grad_H_field(f, dm.i), F, moments=mom)
    rhs = mom.expect(f * divergence_H_poly(dm, F))
    return abs(lhs - rhs)


# smooth test-function factories ---------------------------------------------------

def cosine_ridge(u: Sequence[float], label: str = "") -> SmoothFunction:
    """``x -> cos<x, u>``."""
    u = np.asarray(u, dtype=float)

    def hess(X):
        c = np.cos(X @ u)
        return -c[:, None, None] * np.outer(u, u)[None]

    return SmoothFunction(
        value=lambda X: np.cos(X @ u),
        grad=lambda X: -np.sin(X @ u)[:, None] * u[None, :],
        hessian=hess,
        d=len(u), bounded=True, label=label or "cos<x,u>",
    )


def tanh_ridge(u: Sequence[float], steepness: float = 1.0, label: str = "") -> SmoothFunction:
    """``x -> tanh(k <x, u>)``, a smoothed sign function."""
    u = np.asarray(u, dtype=float)
    k = float(steepness)

    def grad(X):
        s = 1.0 / np.cosh(k * (X @ u)) ** 2
        return (k * s)[:, None] * u[None, :]

    return SmoothFunction(value=lambda X: np.tanh(k * (X @ u)), grad=grad, d=len(u),
                          bounded=True, label=label or f"tanh({k:g}<x,u>)")


def gaussian_bump(center: Sequence[float], width: float = 1.0, label: str = "") -> SmoothFunction:
    """``x -> exp(-|x - c|^2 / (2 w^2))``."""
    c = np.asarray(center, dtype=float)
    w2 = float(width) ** 2

    def value(X):
        return np.exp(-((X - c) ** 2).sum(axis=1) / (2 * w2))

    return SmoothFunction(value=value, grad=lambda X: -(X - c) / w2 * value(X)[:, None], d=len(c),
                          bounded=True, label=label or "gaussian bump")
