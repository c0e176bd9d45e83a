"""Sparse multivariate polynomials with exact Gaussian expectations.

A :class:`Polynomial` stores an ``(k, d)`` integer exponent table and ``k``
coefficients. Gaussian moments come from the Isserlis recursion

    E[x_k x^a] = sum_j C[k, j] a_j E[x^(a - e_j)]

so every expectation of a polynomial under a centred Gaussian is exact up to
floating point.
"""

from __future__ import annotations

import math
from functools import reduce
from typing import Iterable, Sequence

import numpy as np
from numpy.polynomial import hermite_e

__all__ = [
    "Polynomial",
    "GaussianMoments",
    "gaussian_expectation",
    "linear_form",
    "hermite_in_form",
    "random_polynomial",
]

_EVAL_CHUNK = 32768


class Polynomial:
    """Real polynomial in ``d`` variables."""

    __slots__ = ("exps", "coefs", "d")

    def __init__(self, exps, coefs, d: int | None = None):
        exps = np.asarray(exps, dtype=np.int64)
        coefs = np.asarray(coefs, dtype=float).reshape(-1)
        if exps.ndim == 1:
            exps = exps.reshape(len(coefs), -1) if len(coefs) else exps.reshape(0, d or 0)
        if d is None:
            d = exps.shape[1]
        if exps.shape != (len(coefs), d):
            raise ValueError(f"exponent table shape {exps.shape} does not match {len(coefs)} terms in {d} vars")
        if np.any(exps < 0):
            raise ValueError("negative exponents")
        if not np.all(np.isfinite(coefs)):
            raise ValueError("non-finite coefficients")
        if len(coefs):
            uniq, inv = np.unique(exps, axis=0, return_inverse=True)
            summed = np.zeros(len(uniq))
            np.add.at(summed, inv.reshape(-1), coefs)
            nz = summed != 0.0
            exps, coefs = uniq[nz], summed[nz]
        self.exps = exps
        self.coefs = coefs
        self.d = int(d)

    # construction -----------------------------------------------------------------
    @classmethod
    def zero(cls, d: int) -> "Polynomial":
        return cls(np.zeros((0, d), dtype=np.int64), np.zeros(0), d)

    @classmethod
    def constant(cls, c: float, d: int) -> "Polynomial":
        return cls(np.zeros((1, d), dtype=np.int64), [float(c)], d)

    @classmethod
    def variable(cls, k: int, d: int) -> "Polynomial":
        e = np.zeros((1, d), dtype=np.int64)
        e[0, k] = 1
        return cls(e, [1.0], d)

    @classmethod
    def from_terms(cls, terms: dict, d: int) -> "Polynomial":
        """Build from ``{exponent tuple: coefficient}``."""
        if not terms:
            return cls.zero(d)
        return cls(np.array(list(terms.keys()), dtype=np.int64).reshape(-1, d), list(terms.values()), d)

    def to_terms(self) -> dict:
        return {tuple(int(v) for v in e): float(c) for e, c in zip(self.exps, self.coefs)}

    # introspection ----------------------------------------------------------------
    @property
    def degree(self) -> int:
        return int(self.exps.sum(axis=1).max()) if len(self.coefs) else 0

    @property
    def nterms(self) -> int:
        return len(self.coefs)

    def is_zero(self) -> bool:
        return len(self.coefs) == 0

    def is_constant(self) -> bool:
        return self.degree == 0

    def constant_term(self) -> float:
        mask = self.exps.sum(axis=1) == 0
        return float(self.coefs[mask].sum())

    def max_partial_degree(self) -> int:
        return int(self.exps.max()) if len(self.coefs) else 0

    def __repr__(self) -> str:
        if self.is_zero():
            return f"Polynomial(0, d={self.d})"
        parts = []
        for e, c in zip(self.exps, self.coefs):
            mono = "*".join(f"x{k}^{p}" if p > 1 else f"x{k}" for k, p in enumerate(e) if p)
            parts.append(f"{c:+.6g}" + (f"*{mono}" if mono else ""))
        return f"Polynomial({' '.join(parts)}, d={self.d})"

    # arithmetic ------------------------------------------------------------------
    def _coerce(self, other) -> "Polynomial":
        if isinstance(other, Polynomial):
            if other.d != self.d:
                raise ValueError(f"dimension mismatch: {self.d} vs {other.d}")
            return other
        return Polynomial.constant(float(other), self.d)

    def __add__(self, other):
        other = self._coerce(other)
        return Polynomial(np.vstack([self.exps, other.exps]), np.concatenate([self.coefs, other.coefs]), self.d)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(self.exps, -self.coefs, self.d)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if not isinstance(other, Polynomial):
            return Polynomial(self.exps, self.coefs * float(other), self.d)
        other = self._coerce(other)
        if self.is_zero() or other.is_zero():
            return Polynomial.zero(self.d)
        exps = (self.exps[:, None, :] + other.exps[None, :, :]).reshape(-1, self.d)
        coefs = np.outer(self.coefs, other.coefs).reshape(-1)
        return Polynomial(exps, coefs, self.d)

    __rmul__ = __mul__

    def __truediv__(self, c: float):
        return self * (1.0 / float(c))

    def __pow__(self, n: int):
        if n < 0 or int(n) != n:
            raise ValueError("only non-negative integer powers")
        result = Polynomial.constant(1.0, self.d)
        base = self
        n = int(n)
        while n:
            if n & 1:
                result = result * base
            n >>= 1
            if n:
                base = base * base
        return result

    def allclose(self, other: "Polynomial", atol: float = 1e-12) -> bool:
        diff = self - other
        return bool(np.all(np.abs(diff.coefs) <= atol))

    # calculus --------------------------------------------------------------------
    def diff(self, k: int) -> "Polynomial":
        """Partial derivative in variable ``k``."""
        p = self.exps[:, k]
        mask = p > 0
        exps = self.exps[mask].copy()
        exps[:, k] -= 1
        return Polynomial(exps, self.coefs[mask] * p[mask], self.d)

    def gradient(self) -> list["Polynomial"]:
        return [self.diff(k) for k in range(self.d)]

    def hessian(self) -> list[list["Polynomial"]]:
        g = self.gradient()
        return [[g[j].diff(k) for k in range(self.d)] for j in range(self.d)]

    def times_variable(self, k: int) -> "Polynomial":
        exps = self.exps.copy()
        exps[:, k] += 1
        return Polynomial(exps, self.coefs, self.d)

    def heat(self, C) -> "Polynomial":
        """Return ``x -> E f(x + Z)`` with ``Z ~ N(0, C)``.

        Computed as the terminating series ``sum_n (1/n!) D^n f`` where
        ``D = 1/2 sum_jk C_jk d_j d_k``.
        """
        C = np.asarray(C, dtype=float)
        if C.shape != (self.d, self.d):
            raise ValueError(f"covariance shape {C.shape} does not match d={self.d}")
        parts_e, parts_c = [self.exps], [self.coefs]
        term = self
        n = 0
        while not term.is_zero() and term.degree >= 2:
            n += 1
            te, tc = [], []
            for j in range(self.d):
                gj = term.diff(j)
                if gj.is_zero():
                    continue
                for k in range(self.d):
                    c = C[j, k]
                    if c != 0.0:
                        p = gj.exps[:, k]
                        mask = p > 0
                        e = gj.exps[mask].copy()
                        e[:, k] -= 1
                        te.append(e)
                        tc.append(gj.coefs[mask] * p[mask] * (0.5 * c / n))
            term = Polynomial(np.vstack(te), np.concatenate(tc), self.d) if te else Polynomial.zero(self.d)
            parts_e.append(term.exps)
            parts_c.append(term.coefs)
        return Polynomial(np.vstack(parts_e), np.concatenate(parts_c), self.d)

    # composition -----------------------------------------------------------------
    def compose_linear(self, M, shift=None) -> "Polynomial":
        """Return ``y -> f(M y + shift)`` where ``M`` is ``(d, d_new)``."""
        M = np.asarray(M, dtype=float)
        if M.ndim != 2 or M.shape[0] != self.d:
            raise ValueError(f"map shape {M.shape} incompatible with d={self.d}")
        d_new = M.shape[1]
        shift = np.zeros(self.d) if shift is None else np.asarray(shift, dtype=float)
        forms = [linear_form(M[j], d_new, shift[j]) for j in range(self.d)]
        cache: dict[tuple[int, int], Polynomial] = {}

        def power(j: int, p: int) -> Polynomial:
            key = (j, p)
            if key not in cache:
                if p == 0:
                    cache[key] = Polynomial.constant(1.0, d_new)
                elif p == 1:
                    cache[key] = forms[j]
                else:
                    half = power(j, p // 2)
                    val = half * half
                    if p % 2:
                        val = val * forms[j]
                    cache[key] = val
            return cache[key]

        pieces_exps = []
        pieces_coefs = []
        for e, c in zip(self.exps, self.coefs):
            factors = [power(j, int(p)) for j, p in enumerate(e) if p]
            term = reduce(lambda a, b: a * b, factors) if factors else Polynomial.constant(1.0, d_new)
            pieces_exps.append(term.exps)
            pieces_coefs.append(term.coefs * c)
        if not pieces_exps:
            return Polynomial.zero(d_new)
        return Polynomial(np.vstack(pieces_exps), np.concatenate(pieces_coefs), d_new)

    # evaluation ------------------------------------------------------------------
    def __call__(self, x) -> np.ndarray | float:
        X = np.asarray(x, dtype=float)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        if X.shape[1] != self.d:
            raise ValueError(f"points have dimension {X.shape[1]}, expected {self.d}")
        out = np.empty(X.shape[0])
        if self.is_zero():
            out[:] = 0.0
            return float(out[0]) if single else out
        pmax = self.max_partial_degree()
        for start in range(0, X.shape[0], _EVAL_CHUNK):
            Xc = X[start:start + _EVAL_CHUNK]
            pw = np.ones((pmax + 1,) + Xc.shape)
            for p in range(1, pmax + 1):
                pw[p] = pw[p - 1] * Xc
            mono = np.ones((Xc.shape[0], self.nterms))
            for k in range(self.d):
                col = self.exps[:, k]
                if np.any(col):
                    mono *= pw[col, :, k].T
            out[start:start + _EVAL_CHUNK] = mono @ self.coefs
        return float(out[0]) if single else out

    def grad_at(self, x) -> np.ndarray:
        """Gradient at points ``x``; shape ``(d,)`` or ``(n, d)``."""
        X = np.asarray(x, dtype=float)
        vals = [g(X) for g in self.gradient()]
        return np.stack(vals, axis=-1)

    def hessian_at(self, x) -> np.ndarray:
        X = np.asarray(x, dtype=float)
        H = self.hessian()
        return np.stack([np.stack([H[j][k](X) for k in range(self.d)], axis=-1) for j in range(self.d)], axis=-2)

    # Gaussian integration -----------------------------------------------------------
    def expectation(self, cov, mean=None) -> float:
        """Exact ``E f(X)`` for ``X ~ N(mean, cov)``."""
        moments = cov if isinstance(cov, GaussianMoments) else GaussianMoments(cov)
        f = self if mean is None else self.compose_linear(np.eye(self.d), mean)
        return moments.expect(f)


def linear_form(u, d: int | None = None, c: float = 0.0) -> Polynomial:
    """The affine polynomial ``x -> <x, u> + c``."""
    u = np.asarray(u, dtype=float).reshape(-1)
    d = len(u) if d is None else d
    exps = np.vstack([np.zeros((1, d), dtype=np.int64), np.eye(d, dtype=np.int64)])
    return Polynomial(exps, np.concatenate([[c], u]), d)


def hermite_in_form(n: int, u, normalized: bool = True) -> Polynomial:
    """Probabilists' Hermite polynomial ``He_n(<x, u>)``, divided by ``sqrt(n!)`` if normalized."""
    coeffs = hermite_e.herme2poly([0.0] * n + [1.0])
    L = linear_form(u)
    result = Polynomial.zero(L.d)
    power = Polynomial.constant(1.0, L.d)
    for p, c in enumerate(coeffs):
        if p:
            power = power * L
        if c:
            result = result + power * c
    if normalized:
        result = result / math.sqrt(math.factorial(n))
    return result


class GaussianMoments:
    """Memoized moments ``E[x^a]`` of a centred Gaussian with covariance ``C``."""

    def __init__(self, cov):
        C = np.asarray(cov, dtype=float)
        if C.ndim != 2 or C.shape[0] != C.shape[1]:
            raise ValueError("covariance must be square")
        self.C = 0.5 * (C + C.T)
        self.d = C.shape[0]
        self._memo: dict[tuple[int, ...], float] = {(0,) * self.d: 1.0}

    def moment(self, alpha: Sequence[int]) -> float:
        key = tuple(int(a) for a in alpha)
        if sum(key) % 2:
            return 0.0
        cached = self._memo.get(key)
        if cached is not None:
            return cached
        k = next(i for i, a in enumerate(key) if a)
        rest = list(key)
        rest[k] -= 1
        total = 0.0
        for j, aj in enumerate(rest):
            if aj and self.C[k, j] != 0.0:
                rest[j] -= 1
                total += self.C[k, j] * aj * self.moment(rest)
                rest[j] += 1
        self._memo[key] = total
        return total

    def gram(self, F: Sequence[Polynomial], G: Sequence[Polynomial]) -> np.ndarray:
        """Matrix of exact cross moments ``E[F_a G_b]``."""
        def table(polys):
            exps = np.vstack([p.exps for p in polys] + [np.zeros((0, self.d), dtype=np.int64)])
            uniq, inv = np.unique(exps, axis=0, return_inverse=True)
            inv = inv.reshape(-1)
            coef = np.zeros((len(polys), len(uniq)))
            start = 0
            for a, p in enumerate(polys):
                np.add.at(coef[a], inv[start:start + p.nterms], p.coefs)
                start += p.nterms
            return uniq, coef

        U, CF = table(F)
        V, CG = table(G)
        K = np.array([[self.moment(u + v) for v in V] for u in U]).reshape(len(U), len(V))
        return CF @ K @ CG.T

    def expect(self, f: Polynomial) -> float:
        if f.d != self.d:
            raise ValueError(f"polynomial dimension {f.d} does not match covariance {self.d}")
        # exact sum ordered by term for reproducibility
        return float(sum(c * self.moment(e) for e, c in zip(f.exps, f.coefs)))


def gaussian_expectation(f: Polynomial, cov, mean=None) -> float:
    return f.expectation(cov, mean)


def random_polynomial(rng: np.random.Generator, d: int, degree: int, *,
                      density: float = 1.0, scale: float = 1.0,
                      variables: Iterable[int] | None = None) -> Polynomial:
    """Random polynomial of total degree at most ``degree``.

    ``variables`` restricts the support to a subset of coordinates (a
    cylindrical function). Each candidate monomial is kept with probability
    ``density``; kept coefficients are standard normal times ``scale``.
    """
    active = sorted(set(range(d) if variables is None else variables))
    terms: dict[tuple[int, ...], float] = {}

    def rec(pos: int, remaining: int, cur: list[int]):
        if pos == len(active):
            exp = [0] * d
            for v, p in zip(active, cur):
                exp[v] = p
            if rng.random() < density:
                terms[tuple(exp)] = float(rng.standard_normal() * scale)
            return
        for p in range(remaining + 1):
            cur.append(p)
            rec(pos + 1, remaining - p, cur)
            cur.pop()

    rec(0, degree, [])
    # guarantee the requested degree is present
    top = [0] * d
    top[active[0]] = degree
    terms.setdefault(tuple(top), float(rng.standard_normal() * scale) or 1.0)
    return Polynomial.from_terms(terms, d)
