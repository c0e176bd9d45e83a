"""Seeded Gaussian integration: Monte Carlo, randomized QMC, Gauss-Hermite.

Monte Carlo draws come in fixed-size chunks, each from its own Philox stream
keyed by ``(seed, chunk index)``. Chunk sums are reduced in index order, so an
estimate depends only on ``(seed, n_samples)`` and never on the thread count.
"""

from __future__ import annotations

import itertools
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from numpy.polynomial import hermite_e
from scipy.stats import qmc
from scipy.special import ndtri

__all__ = [
    "Estimate",
    "Budget",
    "QuadratureOrderError",
    "set_threads",
    "get_threads",
    "chunk_rng",
    "gaussian_mc",
    "gaussian_mc_stats",
    "gaussian_qmc",
    "gauss_hermite_rule",
    "gaussian_quadrature",
    "standard_normal_chunks",
]

CHUNK = 1 << 16
SCHEMES = ("exact", "mc", "qmc", "quadrature")

_threads: int | None = None


class QuadratureOrderError(ValueError):
    """Raised when a quadrature rule is too coarse to integrate a polynomial exactly."""


def set_threads(n: int | None) -> None:
    global _threads
    _threads = None if n is None else max(1, int(n))


def get_threads() -> int:
    if _threads is not None:
        return _threads
    env = os.environ.get("OU_LAB_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


@dataclass(frozen=True)
class Estimate:
    """A scalar or vector estimate with its Monte Carlo standard error.

    ``stderr`` is zero for the exact and quadrature schemes.
    """

    value: float | np.ndarray
    stderr: float | np.ndarray = 0.0
    n_samples: int = 0
    seed: int | None = None
    scheme: str = "exact"

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if np.any(np.asarray(self.stderr) < 0):
            raise ValueError("stderr must be non-negative")
        if self.scheme in ("exact", "quadrature") and np.any(np.asarray(self.stderr) != 0):
            raise ValueError(f"{self.scheme} estimates carry zero stderr")

    @classmethod
    def exact(cls, value) -> "Estimate":
        return cls(value=value, stderr=np.zeros_like(value) if np.ndim(value) else 0.0)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("value", "stderr"):
            v = d[k]
            d[k] = np.asarray(v).tolist() if np.ndim(v) else float(v)
        return d


@dataclass(frozen=True)
class Budget:
    """How to integrate: scheme plus its size parameters."""

    scheme: str = "exact"
    n_samples: int = 100_000
    seed: int = 0
    order: int | None = None
    replicates: int = 16

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.n_samples <= 0 or self.replicates < 2:
            raise ValueError("budget sizes must be positive (replicates >= 2)")

    def doubled(self) -> "Budget":
        return Budget(self.scheme, 2 * self.n_samples, self.seed, self.order, self.replicates)


def chunk_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=[int(seed) & 0xFFFFFFFFFFFFFFFF, int(index)]))


def standard_normal_chunks(seed: int, n: int, dim: int):
    """Yield ``(index, Z)`` chunks of standard normals totalling ``n`` rows."""
    for index, start in enumerate(range(0, n, CHUNK)):
        rows = min(CHUNK, n - start)
        yield index, chunk_rng(seed, index).standard_normal((rows, dim))


def gaussian_mc_stats(fn: Callable[[np.ndarray], np.ndarray], cov, n: int, seed: int,
                      mean=None, factor=None, _shape: list | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Sample mean and covariance of ``fn(X)`` over ``n`` draws of ``X ~ N(mean, cov)``.

    ``fn`` maps an ``(rows, d)`` array to ``(rows,)`` or ``(rows, k)``.
    ``factor`` is a matrix ``W`` with ``W W^T = cov``; the symmetric root is
    used otherwise. Returns ``(mean (k,), covariance (k, k))``.
    """
    if n < 2:
        raise ValueError("need at least two samples")
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    d = cov.shape[0]
    W = _root(cov) if factor is None else np.asarray(factor, dtype=float)
    mu = np.zeros(d) if mean is None else np.asarray(mean, dtype=float)

    def work(index: int):
        rows = min(CHUNK, n - index * CHUNK)
        Z = chunk_rng(seed, index).standard_normal((rows, W.shape[1]))
        raw = np.asarray(fn(Z @ W.T + mu), dtype=float)
        if _shape is not None and index == 0:
            _shape.append(raw.ndim)
        vals = raw.reshape(rows, -1)
        return vals.sum(axis=0), vals.T @ vals

    n_chunks = -(-n // CHUNK)
    threads = get_threads()
    if threads > 1 and n_chunks > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, range(n_chunks)))
    else:
        parts = [work(i) for i in range(n_chunks)]
    s = parts[0][0].copy()
    s2 = parts[0][1].copy()
    for a, b in parts[1:]:
        s += a
        s2 += b
    m = s / n
    C = (s2 / n - np.outer(m, m)) * n / (n - 1)
    return m, C


def gaussian_mc(fn: Callable[[np.ndarray], np.ndarray], cov, n: int, seed: int,
                mean=None, factor=None) -> Estimate:
    """Monte Carlo ``E fn(X)`` for ``X ~ N(mean, cov)``."""
    shape: list = []
    m, C = gaussian_mc_stats(fn, cov, n, seed, mean=mean, factor=factor, _shape=shape)
    se = np.sqrt(np.clip(np.diag(C), 0.0, None) / n)
    if shape and shape[0] == 1:
        return Estimate(value=float(m[0]), stderr=float(se[0]), n_samples=n, seed=seed, scheme="mc")
    return Estimate(value=m, stderr=se, n_samples=n, seed=seed, scheme="mc")


def gaussian_qmc(fn: Callable[[np.ndarray], np.ndarray], cov, n: int, seed: int,
                 replicates: int = 16, mean=None) -> Estimate:
    """Randomized QMC: independently scrambled Sobol sets, stderr across replicates."""
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    d = cov.shape[0]
    W = _root(cov)
    mu = np.zeros(d) if mean is None else np.asarray(mean, dtype=float)
    per = max(2, n // replicates)
    m = int(math.ceil(math.log2(per)))
    reps = []
    for r in range(replicates):
        sob = qmc.Sobol(d, scramble=True, seed=chunk_rng(seed, r))
        U = sob.random_base2(m)
        U = np.clip(U, 1e-16, 1 - 1e-16)
        reps.append(np.asarray(fn(ndtri(U) @ W.T + mu), dtype=float).mean(axis=0))
    reps = np.array(reps)
    val = reps.mean(axis=0)
    se = reps.std(axis=0, ddof=1) / math.sqrt(replicates)
    return Estimate(value=_scalar(val), stderr=_scalar(se), n_samples=replicates * (1 << m),
                    seed=seed, scheme="qmc")


def gauss_hermite_rule(order: int, dim: int):
    """Tensor Gauss-Hermite nodes/weights for the standard normal in ``dim`` variables.

    Exact for polynomials of degree at most ``2*order - 1`` in each variable.
    """
    x, w = hermite_e.hermegauss(order)
    w = w / math.sqrt(2 * math.pi)
    nodes = np.array(list(itertools.product(x, repeat=dim))).reshape(-1, dim)
    weights = np.prod(np.array(list(itertools.product(w, repeat=dim))).reshape(-1, dim), axis=1)
    return nodes, weights


def gaussian_quadrature(fn: Callable[[np.ndarray], np.ndarray], cov, order: int,
                        mean=None, poly_degree: int | None = None, max_dim: int = 4) -> Estimate:
    """Tensor Gauss-Hermite ``E fn(X)``, ``X ~ N(mean, cov)``.

    If ``poly_degree`` is given the rule must integrate that degree exactly,
    otherwise :class:`QuadratureOrderError` is raised.
    """
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    d = cov.shape[0]
    if d > max_dim:
        raise ValueError(f"tensor quadrature offered for d <= {max_dim}, got {d}")
    if poly_degree is not None and 2 * order - 1 < poly_degree:
        raise QuadratureOrderError(
            f"order {order} integrates degree {2 * order - 1} exactly; polynomial has degree {poly_degree}"
        )
    nodes, weights = gauss_hermite_rule(order, d)
    mu = np.zeros(d) if mean is None else np.asarray(mean, dtype=float)
    vals = np.asarray(fn(nodes @ _root(cov).T + mu), dtype=float)
    val = np.tensordot(weights, vals, axes=(0, 0))
    return Estimate(value=_scalar(val), stderr=_scalar(np.zeros_like(val)),
                    n_samples=len(weights), scheme="quadrature")


def _root(cov: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(0.5 * (cov + cov.T))
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T


def _scalar(v):
    v = np.asarray(v, dtype=float)
    return float(v) if v.ndim == 0 else v
