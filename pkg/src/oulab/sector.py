"""Resolvents of Kronecker sums by the double contour integral over sector boundaries.

For sectorial ``A`` and ``B`` of angle below pi/2 and ``lam`` outside the sum
sector,

    R(lam, A (+) B) = (2 pi i)^{-2} int_{gB} int_{gA} (lam - (w + z))^{-1} R(w, A) (x) R(z, B) dw dz

where ``gA``, ``gB`` are the downward oriented boundaries of
``{|z| < r} U {|arg z| < theta}``. Ray segments are mapped to a bounded
parameter interval, so ``R = inf`` is an untruncated contour and a finite
``R`` truncates at ``|z| = R``.
"""

from __future__ import annotations

import cmath
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .numkit import as_matrix

__all__ = [
    "NotSectorialError",
    "SectorContour",
    "SectorialMatrix",
    "SectorialCertificate",
    "ContourResult",
    "certify_sectorial",
    "sum_sector_distance",
    "contour_resolvent",
    "kron_sum",
    "kron_sum_resolvent_oracle",
    "convergence_study",
]

DEFAULT_MARGIN = 0.05
RAY_GRADING = 3


class NotSectorialError(ValueError):
    def __init__(self, message: str, witness: complex | None = None):
        super().__init__(message)
        self.witness = witness


@dataclass(frozen=True)
class SectorContour:
    """Boundary of ``{|z| < r} U {|arg z| < theta}``, truncated at ``|z| = R``.

    Traversed downward: in along the upper ray, counterclockwise around the
    left part of the circle of radius ``r``, out along the lower ray.
    """

    theta: float
    r: float
    R: float = math.inf
    nodes_per_segment: int = 200

    def __post_init__(self):
        if not 0.0 < self.theta < math.pi / 2:
            raise ValueError(f"theta must lie in (0, pi/2), got {self.theta}")
        if not 0.0 < self.r < self.R:
            raise ValueError(f"need 0 < r < R, got r={self.r}, R={self.R}")
        if self.nodes_per_segment < 2:
            raise ValueError("need at least 2 nodes per segment")

    @property
    def orientation(self) -> str:
        return "downward"

    def quadrature(self) -> tuple[np.ndarray, np.ndarray]:
        """Nodes ``z_k`` and complex weights ``dz_k`` (Gauss-Legendre per segment).

        Rays use ``rho = r u^-3`` with ``u`` in ``((r/R)^(1/3), 1]``; the grading
        smooths the corner of the double integral where both contours run to
        infinity.
        """
        n = self.nodes_per_segment
        x, w = np.polynomial.legendre.leggauss(n)
        u_min = (self.r / self.R) ** (1.0 / RAY_GRADING) if math.isfinite(self.R) else 0.0
        u = u_min + 0.5 * (1.0 - u_min) * (x + 1.0)
        wu = 0.5 * (1.0 - u_min) * w
        rho = self.r * u ** (-RAY_GRADING)
        drho = RAY_GRADING * self.r * u ** (-RAY_GRADING - 1) * wu
        up = cmath.exp(1j * self.theta)
        down = cmath.exp(-1j * self.theta)
        # upper ray inward (u increasing means rho decreasing)
        z_up = rho * up
        dz_up = -drho * up
        span = 2 * math.pi - 2 * self.theta
        phi = self.theta + 0.5 * span * (x + 1.0)
        z_arc = self.r * np.exp(1j * phi)
        dz_arc = 1j * z_arc * (0.5 * span * w)
        # lower ray outward
        z_lo = rho[::-1] * down
        dz_lo = drho[::-1] * down
        return np.concatenate([z_up, z_arc, z_lo]), np.concatenate([dz_up, dz_arc, dz_lo])


@dataclass(frozen=True)
class SectorialCertificate:
    theta: float
    bound: float
    min_eig_modulus: float
    max_eig_arg: float
    samples: int


@dataclass(frozen=True)
class SectorialMatrix:
    M: np.ndarray
    theta_claimed: float
    certificate: SectorialCertificate | None = None

    @classmethod
    def certified(cls, M, theta: float, samples: int = 200) -> "SectorialMatrix":
        M = as_matrix(M, square=True, name="M")
        return cls(M=M, theta_claimed=theta, certificate=certify_sectorial(M, theta, samples))

    @property
    def dim(self) -> int:
        return self.M.shape[0]


def _resolvent_norms(M: np.ndarray, z: np.ndarray) -> np.ndarray:
    n = M.shape[0]
    stack = z[:, None, None] * np.eye(n) - M[None, :, :]
    R = np.linalg.inv(stack)
    return np.abs(z) * np.linalg.norm(R, ord=2, axis=(1, 2))


def certify_sectorial(M, theta: float, samples: int = 200, eps: float = DEFAULT_MARGIN) -> SectorialCertificate:
    """Check the eigenvalue arguments exactly and sample ``sup ||z R(z, M)||`` outside the sector.

    Samples lie on the rays ``arg z = +-(theta + eps)`` on a log-spaced grid and
    on a far-field arc. Raises :class:`NotSectorialError` with a witness
    eigenvalue if some eigenvalue has ``|arg| > theta`` or is zero.
    """
    if not 0.0 < theta < math.pi / 2:
        raise ValueError(f"theta must lie in (0, pi/2), got {theta}")
    M = as_matrix(M, square=True, name="M", dtype=complex)
    eig = np.linalg.eigvals(M)
    mods = np.abs(eig)
    if np.any(mods == 0.0):
        raise NotSectorialError("matrix is singular (eigenvalue 0)", witness=0j)
    args = np.abs(np.angle(eig))
    if np.any(args > theta):
        k = int(np.argmax(args))
        raise NotSectorialError(
            f"eigenvalue {eig[k]:.6g} has |arg| = {args[k]:.6g} > theta = {theta:.6g}", witness=complex(eig[k]))
    phi = min(theta + eps, math.pi / 2 - 1e-9) if theta + eps < math.pi else theta
    norm = max(float(np.linalg.norm(M, 2)), 1.0)
    lo = 1e-3 * float(mods.min())
    rho = np.logspace(np.log10(lo), np.log10(1e4 * norm), samples)
    far = 1e4 * norm * np.exp(1j * np.linspace(phi, 2 * math.pi - phi, max(8, samples // 4)))
    z = np.concatenate([rho * cmath.exp(1j * phi), rho * cmath.exp(-1j * phi), far])
    bound = float(_resolvent_norms(M, z).max())
    return SectorialCertificate(theta=theta, bound=bound, min_eig_modulus=float(mods.min()),
                                max_eig_arg=float(args.max()), samples=len(z))


def _sector_distance(lam: complex, theta: float) -> float:
    phi = abs(cmath.phase(lam))
    if phi <= theta:
        return 0.0
    if phi - theta >= math.pi / 2:
        return abs(lam)
    return abs(lam) * math.sin(phi - theta)


def sum_sector_distance(lam: complex, theta_a: float, theta_b: float, r: float) -> float:
    """Distance from ``lam`` to the Minkowski sum of the two regions enclosed by the contours."""
    theta = max(theta_a, theta_b)
    return min(max(0.0, abs(lam) - 2 * r), max(0.0, _sector_distance(lam, theta) - r))


def kron_sum(A, B) -> np.ndarray:
    A = np.asarray(A)
    B = np.asarray(B)
    return np.kron(A, np.eye(B.shape[0])) + np.kron(np.eye(A.shape[0]), B)


def kron_sum_resolvent_oracle(A, B, lam: complex) -> np.ndarray:
    """Dense ``(lam I - A (x) I - I (x) B)^{-1}``."""
    A = as_matrix(A, square=True, name="A", dtype=complex)
    B = as_matrix(B, square=True, name="B", dtype=complex)
    K = lam * np.eye(A.shape[0] * B.shape[0]) - kron_sum(A, B)
    if np.linalg.cond(K) > 1e14:
        raise np.linalg.LinAlgError(f"lam = {lam} is (numerically) in the spectrum of the Kronecker sum")
    return np.linalg.solve(K, np.eye(K.shape[0], dtype=complex))


@dataclass(frozen=True)
class ContourResult:
    value: np.ndarray
    lam: complex
    tail_bound: float
    warning: bool
    distance: float
    contour_A: SectorContour
    contour_B: SectorContour
    n_nodes: int

    def residual(self, A, B) -> float:
        K = self.lam * np.eye(self.value.shape[0]) - kron_sum(A, B)
        return float(np.linalg.norm(K @ self.value - np.eye(self.value.shape[0]), 2))


def _tail_bound(lam: complex, ca: SectorContour, cb: SectorContour, CA: float, CB: float) -> float:
    """Upper bound on the discarded part ``|w| > R`` or ``|z| > R`` of the double integral.

    Uses ``|R(w,A)| <= CA/|w|``, ``|R(z,B)| <= CB/|z|`` and
    ``|lam - w - z| >= Re(w + z) - |lam| >= c (|w| + |z|) / 2`` on the
    discarded rays, with ``c = cos(max theta)``; the ray integrals are done in
    closed form.
    """
    if not math.isfinite(ca.R) and not math.isfinite(cb.R):
        return 0.0
    c = math.cos(max(ca.theta, cb.theta))
    total = 0.0
    for tail, other in ((ca, cb), (cb, ca)):
        R = tail.R
        if not math.isfinite(R):
            continue
        r = other.r
        if R * c < 2.0 * (abs(lam) + r):
            return math.inf
        # rays x rays: int_R^inf int_r^inf 2 / (c rho sigma (rho + sigma))
        J = math.log1p(R / r) / R + math.log1p(r / R) / r
        rays = 4 * (2.0 / c) * J
        # rays x arc of the other contour: 2 rays * arc length / r * int_R^inf 2/(c rho^2)
        arc = 2 * (2 * math.pi - 2 * other.theta) * (2.0 / c) / R
        total += rays + arc
    return CA * CB * total / (4 * math.pi ** 2)


def contour_resolvent(Asec: SectorialMatrix, Bsec: SectorialMatrix, lam: complex,
                      contour: SectorContour | tuple[SectorContour, SectorContour] | None = None, *,
                      nodes_per_segment: int = 200, R: float = math.inf, r: float | None = None,
                      margin: float = DEFAULT_MARGIN, tol: float = 1e-6) -> ContourResult:
    """Double contour quadrature for ``R(lam, A (x) I + I (x) B)``.

    Without an explicit ``contour``, each matrix gets angle ``theta_claimed +
    margin`` and the common radius ``r = min(|lam|/4, min|eig|/2)``.
    """
    lam = complex(lam)
    A, B = Asec.M, Bsec.M
    if contour is None:
        if r is None:
            eig_min = min(np.abs(np.linalg.eigvals(A)).min(), np.abs(np.linalg.eigvals(B)).min())
            r = min(abs(lam) / 4.0, eig_min / 2.0)
        ca = SectorContour(Asec.theta_claimed + margin, r, R, nodes_per_segment)
        cb = SectorContour(Bsec.theta_claimed + margin, r, R, nodes_per_segment)
    elif isinstance(contour, SectorContour):
        ca = cb = contour
    else:
        ca, cb = contour
    for sec, cont, name in ((Asec, ca, "A"), (Bsec, cb, "B")):
        if cont.theta <= sec.theta_claimed:
            raise ValueError(f"contour angle for {name} must exceed its sectoriality angle")
    if ca.r != cb.r:
        raise ValueError("both contours must share the inner radius r")
    dist = sum_sector_distance(lam, ca.theta, cb.theta, ca.r)
    if dist <= 1e-8 * max(1.0, abs(lam)):
        raise ValueError(
            f"lam = {lam} lies in or too close to the sum sector (distance {dist:.3e}); "
            f"need |arg lam| > {max(ca.theta, cb.theta):.4f} and |lam| > 2r = {2 * ca.r:.4g}")

    wA, dwA = ca.quadrature()
    zB, dzB = cb.quadrature()
    nA, nB = A.shape[0], B.shape[0]
    RA = np.linalg.inv(wA[:, None, None] * np.eye(nA) - A[None].astype(complex))
    RB = np.linalg.inv(zB[:, None, None] * np.eye(nB) - B[None].astype(complex))
    kernel = dwA[:, None] * dzB[None, :] / (lam - wA[:, None] - zB[None, :])
    inner = np.einsum("ab,aij->bij", kernel, RA)
    total = np.einsum("bij,bkl->ikjl", inner, RB).reshape(nA * nB, nA * nB)
    value = total / (2j * math.pi) ** 2

    CA = max(_cert_bound(Asec, ca), float((np.abs(wA) * np.linalg.norm(RA, 2, axis=(1, 2))).max()))
    CB = max(_cert_bound(Bsec, cb), float((np.abs(zB) * np.linalg.norm(RB, 2, axis=(1, 2))).max()))
    tail = _tail_bound(lam, ca, cb, CA, CB)
    return ContourResult(value=value, lam=lam, tail_bound=tail, warning=bool(tail > tol), distance=dist,
                         contour_A=ca, contour_B=cb, n_nodes=len(wA) * len(zB))


def _cert_bound(sec: SectorialMatrix, cont: SectorContour) -> float:
    cert = sec.certificate
    if cert is not None and cert.theta <= cont.theta - DEFAULT_MARGIN + 1e-12:
        return cert.bound
    return certify_sectorial(sec.M, sec.theta_claimed, eps=cont.theta - sec.theta_claimed).bound


@dataclass
class StudyRow:
    nodes: int
    R: float
    error: float
    tail_bound: float
    runtime_ms: float

    def as_row(self) -> list:
        return [self.nodes, self.R, self.error, self.tail_bound, self.runtime_ms]


@dataclass
class ConvergenceStudy:
    rows: list[StudyRow] = field(default_factory=list)
    final_error: float = math.nan
    nodes_monotone: bool = True
    R_monotone: bool = True

    header = ("nodes", "R", "error", "tail_bound", "runtime_ms")

    def to_csv(self, path) -> None:
        import csv

        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.header)
            for row in self.rows:
                w.writerow(row.as_row())


def convergence_study(Asec: SectorialMatrix, Bsec: SectorialMatrix, lam: complex,
                      node_schedule=(25, 50, 100, 200, 400), R_schedule=None,
                      r: float | None = None, floor: float = 1e-12) -> ConvergenceStudy:
    """Relative error against the dense oracle as nodes grow (``R = inf``) and as ``R`` grows.

    The node sweep uses untruncated contours, the ``R`` sweep uses the largest
    node count. Monotonicity is judged on errors above ``floor`` (roundoff).
    """
    oracle = kron_sum_resolvent_oracle(Asec.M, Bsec.M, lam)
    onorm = np.linalg.norm(oracle, 2)
    scale = max(float(np.linalg.norm(Asec.M, 2)), float(np.linalg.norm(Bsec.M, 2)))
    if R_schedule is None:
        R_schedule = tuple(scale * f for f in (10.0, 100.0, 1e3, 1e4, 1e5, 1e6)) + (math.inf,)
    study = ConvergenceStudy()

    def run(nodes, R):
        t0 = time.perf_counter()
        res = contour_resolvent(Asec, Bsec, lam, nodes_per_segment=nodes, R=R, r=r)
        ms = 1e3 * (time.perf_counter() - t0)
        err = float(np.linalg.norm(res.value - oracle, 2) / onorm)
        row = StudyRow(nodes, R, err, res.tail_bound, ms)
        study.rows.append(row)
        return row

    node_rows = [run(n, math.inf) for n in node_schedule]
    R_rows = [run(node_schedule[-1], R) for R in R_schedule]
    study.nodes_monotone = _monotone([x.error for x in node_rows], floor)
    study.R_monotone = _monotone([x.error for x in R_rows], floor)
    study.final_error = min(node_rows[-1].error, R_rows[-1].error)
    return study


def _monotone(errors, floor: float) -> bool:
    above = [e for e in errors if e > floor]
    return all(b <= a * (1 + 1e-6) for a, b in zip(above, above[1:]))
