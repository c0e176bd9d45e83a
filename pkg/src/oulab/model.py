"""Ornstein-Uhlenbeck problem data ``(A, i)`` and everything derived from it.

Coordinates
-----------
``H_inf`` (the reproducing kernel space of the invariant measure) is handled
in whitened coordinates: with ``Q_inf = V diag(s) V^T`` restricted to its
range, ``x = V s^{1/2} h`` and ``|h|`` is the ``H_inf`` norm. ``S_inf(t)``
is then ``exp(t * Atilde_inf)`` with ``Atilde_inf = s^{-1/2} V^T A V s^{1/2}``.
For ``m == d`` the direction space ``H`` is coordinatized by ``x = i h`` and
``S_H(t) = exp(t * Atilde_H)`` with ``Atilde_H = i^{-1} A i``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .numkit import (
    NotHurwitzError,
    SpdFactor,
    as_matrix,
    expm,
    solve_lyapunov,
    spd_factor,
    spectral_abscissa,
)

__all__ = [
    "AssumptionFailure",
    "DegenerateModelError",
    "ModelSpec",
    "DerivedModel",
    "ConditionEntry",
    "ConditionReport",
    "derive",
    "covariance_at",
    "semigroup_norm_Hinf",
    "check_theorem_conditions",
    "random_model",
]


class AssumptionFailure(ValueError):
    """The drift admits no invariant Gaussian measure (A is not Hurwitz)."""


class DegenerateModelError(ValueError):
    """An operation needs a nondegenerate ``Q_inf`` or noise with ``m == d``."""


@dataclass(frozen=True)
class ModelSpec:
    A: np.ndarray
    i: np.ndarray
    label: str = ""

    def __post_init__(self):
        A = as_matrix(self.A, square=True, name="A")
        i = as_matrix(self.i, name="i")
        if i.shape[0] != A.shape[0]:
            raise ValueError(f"injection i has {i.shape[0]} rows, drift is {A.shape[0]}x{A.shape[0]}")
        if i.shape[1] == 0 or np.linalg.matrix_rank(i) != i.shape[1]:
            raise ValueError("injection i must have full column rank")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "i", i)

    @property
    def d(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.i.shape[1]

    def to_json(self) -> dict:
        return {
            "label": self.label,
            "d": self.d,
            "m": self.m,
            "A": self.A.reshape(-1).tolist(),
            "i": self.i.reshape(-1).tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ModelSpec":
        """Accept flat row-major arrays (with ``d``/``m``) or nested rows."""
        A = np.asarray(obj["A"], dtype=float)
        i = np.asarray(obj["i"], dtype=float)
        d = obj.get("d")
        m = obj.get("m")
        if A.ndim == 1:
            if d is None:
                d = int(round(np.sqrt(A.size)))
            A = A.reshape(int(d), int(d))
        if i.ndim == 1:
            d_ = A.shape[0]
            if m is None:
                m = i.size // d_
            i = i.reshape(d_, int(m))
        spec = cls(A=A, i=i, label=str(obj.get("label", "")))
        if d is not None and spec.d != int(d):
            raise ValueError(f"declared d={d} but A is {spec.d}x{spec.d}")
        if m is not None and spec.m != int(m):
            raise ValueError(f"declared m={m} but i has {spec.m} columns")
        return spec

    @classmethod
    def load(cls, path: str | Path) -> "ModelSpec":
        return cls.from_json(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class DerivedModel:
    spec: ModelSpec
    Q: np.ndarray
    Qinf: np.ndarray
    QinfFactor: SpdFactor
    Atilde_inf: np.ndarray
    omega: float
    B: np.ndarray | None
    Atilde_H: np.ndarray | None
    flags: dict = field(default_factory=dict)

    @property
    def d(self) -> int:
        return self.spec.d

    @property
    def m(self) -> int:
        return self.spec.m

    @property
    def A(self) -> np.ndarray:
        return self.spec.A

    @property
    def i(self) -> np.ndarray:
        return self.spec.i

    @property
    def nondegenerate(self) -> bool:
        return bool(self.flags["qinf_nondegenerate"])

    @property
    def full_noise(self) -> bool:
        return bool(self.flags["nondegenerate_noise"])

    @property
    def Qinf_inv(self) -> np.ndarray:
        self.require_nondegenerate()
        return self.QinfFactor.inverse()

    @property
    def whitening(self) -> np.ndarray:
        """``d x r`` map ``T`` with ``x = T h`` for ``h`` in whitened ``H_inf`` coordinates."""
        f = self.QinfFactor
        return f.range_basis * np.sqrt(f.range_eigenvalues)

    def require_nondegenerate(self) -> None:
        if not self.flags["qinf_nondegenerate"]:
            raise DegenerateModelError("Q_inf is singular (H_inf degenerate); operation unavailable")

    def require_full_noise(self) -> None:
        if not self.flags["nondegenerate_noise"]:
            raise DegenerateModelError("noise is degenerate (m < d); B and S_H are not available")

    def semigroup(self, t: float) -> np.ndarray:
        return expm(self.A, t)

    def S_H(self, t: float) -> np.ndarray:
        self.require_full_noise()
        return expm(self.Atilde_H, t)

    def summary(self) -> dict[str, Any]:
        out = {
            "label": self.spec.label,
            "d": self.d,
            "m": self.m,
            "Qinf": self.Qinf.tolist(),
            "omega": self.omega,
            "qinf_rank": self.QinfFactor.rank,
            "flags": dict(self.flags),
            "lyapunov_residual": float(np.linalg.norm(self.A @ self.Qinf + self.Qinf @ self.A.T + self.Q)),
        }
        if self.B is not None:
            out["B"] = self.B.tolist()
            out["B_plus_BT_plus_I"] = float(np.linalg.norm(self.B + self.B.T + np.eye(self.m)))
        return out


def derive(spec: ModelSpec) -> DerivedModel:
    """Compute ``Q_inf``, the whitened generators, ``B``, ``omega`` and flags."""
    A, i = spec.A, spec.i
    d, m = spec.d, spec.m
    Q = i @ i.T
    try:
        Qinf = solve_lyapunov(A, Q)
    except NotHurwitzError as exc:
        raise AssumptionFailure(str(exc)) from exc
    factor = spd_factor(Qinf)

    K = np.hstack([np.linalg.matrix_power(A, k) @ i for k in range(d)])
    kalman = bool(np.linalg.matrix_rank(K) == d)

    V = factor.range_basis
    s = np.sqrt(factor.range_eigenvalues)
    Atilde_inf = (V.T @ A @ V) * s[None, :] / s[:, None]
    if Atilde_inf.size:
        sym = 0.5 * (Atilde_inf + Atilde_inf.T)
        omega = max(0.0, -float(np.linalg.eigvalsh(sym)[-1]))
    else:
        omega = 0.0

    B = Atilde_H = None
    if m == d:
        i_inv = np.linalg.inv(i)
        B = i_inv @ A @ Qinf @ i_inv.T
        Atilde_H = i_inv @ A @ i

    flags = {
        "hurwitz": True,
        "qinf_nondegenerate": factor.nondegenerate,
        "kalman_rank_full": kalman,
        "nondegenerate_noise": m == d,
    }
    return DerivedModel(spec=spec, Q=Q, Qinf=Qinf, QinfFactor=factor, Atilde_inf=Atilde_inf,
                        omega=omega, B=B, Atilde_H=Atilde_H, flags=flags)


def covariance_at(dm: DerivedModel, t: float) -> np.ndarray:
    """Covariance ``Q_t = Q_inf - S(t) Q_inf S(t)^T`` of the solution started at a point."""
    if t < 0:
        raise ValueError("t must be non-negative")
    if t == 0:
        return np.zeros_like(dm.Qinf)
    S = expm(dm.A, t)
    Qt = dm.Qinf - S @ dm.Qinf @ S.T
    return 0.5 * (Qt + Qt.T)


def semigroup_norm_Hinf(dm: DerivedModel, t: float) -> float:
    """Operator norm of ``S_inf(t)`` on ``H_inf``."""
    dm.require_nondegenerate()
    if t < 0:
        raise ValueError("t must be non-negative")
    return float(np.linalg.norm(expm(dm.Atilde_inf, t), 2))


@dataclass(frozen=True)
class ConditionEntry:
    name: str
    holds: bool | None
    value: float | None = None
    note: str = ""

    def to_dict(self) -> dict:
        return {"name": self.name, "holds": self.holds, "value": self.value, "note": self.note}


@dataclass(frozen=True)
class ConditionReport:
    entries: list[ConditionEntry]

    def __getitem__(self, name: str) -> ConditionEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    @property
    def all_hold(self) -> bool:
        return all(e.holds is not False for e in self.entries)

    def to_dict(self) -> list[dict]:
        return [e.to_dict() for e in self.entries]


def _decay_fit(M: np.ndarray, times: np.ndarray) -> float:
    """Slope of ``-log ||exp(tM)||`` against ``t`` over the tail of ``times``."""
    norms = np.array([np.linalg.norm(expm(M, t), 2) for t in times])
    tail = slice(len(times) // 2, None)
    slope = np.polyfit(times[tail], np.log(norms[tail]), 1)[0]
    return float(-slope)


def check_theorem_conditions(dm: DerivedModel) -> ConditionReport:
    """Matrix-level status of the equivalent conditions for the Poincare inequality."""
    entries: list[ConditionEntry] = []
    degenerate = not dm.nondegenerate
    if degenerate:
        entries.append(ConditionEntry(
            "h_inf_degenerate", False, float(dm.QinfFactor.rank),
            "Q_inf singular: H_inf is a proper subspace, inequality operations restricted"))

    At = dm.Atilde_inf
    smin = float(np.linalg.svd(At, compute_uv=False).min()) if At.size else 0.0
    entries.append(ConditionEntry(
        "closed_range", smin > 0.0, smin,
        "finite dimension: closed range automatic; recorded as invertibility of A_inf (min singular value)"))
    entries.append(ConditionEntry(
        "contraction_rate_S_inf", dm.omega > 0.0, dm.omega,
        "||S_inf(t)|| <= exp(-omega t) with omega = -1/2 lambda_max(Atilde + Atilde^T)"))
    abscissa_inf = spectral_abscissa(At) if At.size else 0.0
    entries.append(ConditionEntry(
        "exp_stable_S_inf", abscissa_inf < 0.0, -abscissa_inf,
        "asymptotic decay rate of S_inf (minus spectral abscissa)"))

    if dm.full_noise:
        AH = dm.Atilde_H
        margin = -0.5 * float(np.linalg.eigvalsh(AH + AH.T)[-1])
        rate = -spectral_abscissa(AH)
        times = np.linspace(0.0, 20.0 / max(rate, 1e-3), 41)
        fitted = _decay_fit(AH, times)
        entries.append(ConditionEntry(
            "contraction_margin_S_H", None, margin,
            "-1/2 lambda_max(Atilde_H + Atilde_H^T); may be negative when S_H is not contractive"))
        entries.append(ConditionEntry(
            "exp_stable_S_H", rate > 0.0, rate,
            f"minus spectral abscissa of Atilde_H; sampled norm decay fit {fitted:.6g}"))
        emb = float(np.linalg.norm(np.linalg.solve(dm.i, dm.QinfFactor.root), 2))
        entries.append(ConditionEntry(
            "embedding_Hinf_in_H", True, emb, "||i^{-1} Q_inf^{1/2}||"))
        entries.append(ConditionEntry(
            "analytic_P", True, None, "finite dimensions with nondegenerate noise"))
    else:
        # range(Q_inf^{1/2}) must lie in range(i) for H_inf to embed in H
        P_i = dm.i @ np.linalg.pinv(dm.i)
        R = dm.QinfFactor.root
        leak = float(np.linalg.norm(R - P_i @ R, 2))
        entries.append(ConditionEntry(
            "embedding_Hinf_in_H", leak <= 1e-10 * max(1.0, np.linalg.norm(R, 2)), leak,
            "degenerate noise: component of Q_inf^{1/2} outside range(i)"))
        entries.append(ConditionEntry(
            "analytic_P", None, None, "degenerate noise: analyticity not guaranteed"))

    poincare_const = 1.0 / np.sqrt(2.0 * dm.omega) if dm.omega > 0 else float("inf")
    entries.append(ConditionEntry(
        "poincare_p2", dm.omega > 0.0, poincare_const, "sharp L^2 constant 1/sqrt(2 omega)"))
    for name in ("compact_resolvent_L", "compact_P", "compact_resolvent_A_inf",
                 "compact_S_inf", "compact_resolvent_A_H", "compact_S_H"):
        entries.append(ConditionEntry(name, True, None, "automatic (finite rank)"))
    return ConditionReport(entries)


def random_model(rng: np.random.Generator, d: int, m: int | None = None, *,
                 nonnormal: float = 1.0, label: str = "") -> ModelSpec:
    """Random Hurwitz drift with a well-conditioned injection."""
    m = d if m is None else m
    G = rng.standard_normal((d, d))
    A = nonnormal * G / np.sqrt(d)
    shift = spectral_abscissa(A) + 0.3 + rng.random()
    A = A - shift * np.eye(d)
    while True:
        i = rng.standard_normal((d, m)) / np.sqrt(m) + (np.eye(d, m) if m <= d else 0.0)
        sv = np.linalg.svd(i, compute_uv=False)
        if sv.min() > 0.2:
            break
    return ModelSpec(A=A, i=i, label=label or f"random-d{d}-m{m}")
