"""Small dense matrix kernels: matrix exponential, Lyapunov solver, PSD roots."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "SpdFactor",
    "NotPsdError",
    "NotHurwitzError",
    "as_matrix",
    "expm",
    "solve_lyapunov",
    "spd_factor",
    "spectral_abscissa",
    "is_hurwitz",
]


class NotPsdError(ValueError):
    """Raised when a matrix expected to be symmetric PSD is not."""


class NotHurwitzError(ValueError):
    """Raised when a drift matrix has an eigenvalue in the closed right half-plane."""


def as_matrix(M, *, square=False, name="matrix", dtype=None) -> np.ndarray:
    """Coerce ``M`` to a finite 2-D array."""
    arr = np.array(M, dtype=dtype if dtype is not None else np.result_type(np.asarray(M), float))
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if square and arr.shape[0] != arr.shape[1]:
        raise ValueError(f"{name} must be square, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    return arr


# Pade coefficients and 1-norm thresholds from Higham (2005).
_PADE = {
    3: (120.0, 60.0, 12.0, 1.0),
    5: (30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0),
    7: (17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0),
    9: (17643225600.0, 8821612800.0, 2075673600.0, 302702400.0, 30270240.0,
        2162160.0, 110880.0, 3960.0, 90.0, 1.0),
    13: (64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
         1187353796428800.0, 129060195264000.0, 10559470521600.0,
         670442572800.0, 33522128640.0, 1323241920.0, 40840800.0,
         960960.0, 16380.0, 182.0, 1.0),
}
_THETA = {
    3: 1.495585217958292e-2,
    5: 2.539398330063230e-1,
    7: 9.504178996162932e-1,
    9: 2.097847961257068e0,
    13: 5.371920351148152e0,
}


def _pade_uv(X: np.ndarray, m: int):
    b = _PADE[m]
    n = X.shape[0]
    ident = np.eye(n, dtype=X.dtype)
    X2 = X @ X
    if m != 13:
        powers = [ident, X2]
        for _ in range(2, m // 2 + 1):
            powers.append(powers[-1] @ X2)
        U = sum(b[2 * k + 1] * powers[k] for k in range(m // 2 + 1))
        V = sum(b[2 * k] * powers[k] for k in range(m // 2 + 1))
        return X @ U, V
    X4 = X2 @ X2
    X6 = X4 @ X2
    U = X @ (X6 @ (b[13] * X6 + b[11] * X4 + b[9] * X2)
             + b[7] * X6 + b[5] * X4 + b[3] * X2 + b[1] * ident)
    V = (X6 @ (b[12] * X6 + b[10] * X4 + b[8] * X2)
         + b[6] * X6 + b[4] * X4 + b[2] * X2 + b[0] * ident)
    return U, V


def expm(A, t: float = 1.0) -> np.ndarray:
    """Return ``exp(t*A)`` by scaling and squaring with a diagonal Pade approximant.

    The Pade degree (3, 5, 7, 9 or 13) and the number of squarings are picked
    from the 1-norm of ``t*A``. Works for real and complex square matrices.
    """
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expm needs a square matrix, got shape {A.shape}")
    dtype = np.result_type(A, float, np.asarray(t))
    X = np.asarray(A, dtype=dtype) * t
    if not np.all(np.isfinite(X)):
        raise ValueError("expm argument has non-finite entries")
    if X.shape[0] == 0:
        return X.copy()
    norm1 = np.linalg.norm(X, 1)
    if norm1 == 0.0:
        return np.eye(X.shape[0], dtype=dtype)

    s = 0
    for m in (3, 5, 7, 9):
        if norm1 <= _THETA[m]:
            break
    else:
        m = 13
        if norm1 > _THETA[13]:
            s = int(max(0, np.ceil(np.log2(norm1 / _THETA[13]))))
            X = X / (2.0 ** s)
    U, V = _pade_uv(X, m)
    F = np.linalg.solve(V - U, V + U)
    for _ in range(s):
        F = F @ F
    return F


def spectral_abscissa(A) -> float:
    """Largest real part of the eigenvalues of ``A``."""
    return float(np.max(np.linalg.eigvals(as_matrix(A, square=True)).real))


def is_hurwitz(A) -> bool:
    return spectral_abscissa(A) < 0.0


def solve_lyapunov(A, Q) -> np.ndarray:
    """Solve ``A X + X A^T + Q = 0`` for a Hurwitz ``A`` by Kronecker vectorization.

    The unique solution is ``X = int_0^inf e^{sA} Q e^{sA^T} ds``; it is
    symmetrized before returning. Intended for d up to about 32.
    """
    A = as_matrix(A, square=True, name="A")
    Q = as_matrix(Q, square=True, name="Q")
    d = A.shape[0]
    if Q.shape != (d, d):
        raise ValueError(f"Q has shape {Q.shape}, expected {(d, d)}")
    if not np.allclose(Q, Q.T, atol=1e-12 * max(1.0, np.abs(Q).max())):
        raise ValueError("Q must be symmetric")
    abscissa = spectral_abscissa(A)
    if abscissa >= 0.0:
        raise NotHurwitzError(
            f"drift is not Hurwitz (spectral abscissa {abscissa:.6g} >= 0); "
            "no invariant Gaussian measure exists"
        )
    ident = np.eye(d)
    # row-major vec: vec(A X) = (A kron I) vec(X), vec(X A^T) = (I kron A) vec(X)
    K = np.kron(A, ident) + np.kron(ident, A)
    X = np.linalg.solve(K, -Q.reshape(-1)).reshape(d, d)
    return 0.5 * (X + X.T)


@dataclass(frozen=True)
class SpdFactor:
    """Eigendecomposition-based square root of a symmetric PSD matrix."""

    base: np.ndarray
    root: np.ndarray
    rank: int
    pseudo_inverse_root: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def range_basis(self) -> np.ndarray:
        """Orthonormal columns spanning the range of ``base``."""
        return self.eigenvectors[:, -self.rank:] if self.rank else self.eigenvectors[:, :0]

    @property
    def range_eigenvalues(self) -> np.ndarray:
        return self.eigenvalues[-self.rank:] if self.rank else self.eigenvalues[:0]

    @property
    def nondegenerate(self) -> bool:
        return self.rank == self.base.shape[0]

    def inverse(self) -> np.ndarray:
        """Moore-Penrose pseudo-inverse of ``base``."""
        return self.pseudo_inverse_root @ self.pseudo_inverse_root


def spd_factor(M, *, sym_tol: float = 1e-10, neg_tol: float = 1e-10, cutoff: float = 1e-10) -> SpdFactor:
    """Factor a symmetric PSD matrix.

    Eigenvalues below ``cutoff * lambda_max`` count as zero when computing the
    rank and the pseudo-inverse root. Eigenvalues below ``-neg_tol * max(1, lambda_max)``
    are rejected.
    """
    M = as_matrix(M, square=True, name="M")
    scale = max(1.0, float(np.abs(M).max()) if M.size else 1.0)
    if np.abs(M - M.T).max(initial=0.0) > sym_tol * scale:
        raise NotPsdError("matrix is not symmetric")
    M = 0.5 * (M + M.T)
    w, V = np.linalg.eigh(M)
    lam_max = float(w[-1]) if w.size else 0.0
    if w.size and w[0] < -neg_tol * max(1.0, abs(lam_max)):
        raise NotPsdError(f"matrix has negative eigenvalue {w[0]:.3e}")
    keep = w > cutoff * lam_max if lam_max > 0 else np.zeros_like(w, dtype=bool)
    w = np.where(keep, w, 0.0)
    sq = np.sqrt(w)
    inv_sq = np.zeros_like(sq)
    inv_sq[keep] = 1.0 / sq[keep]
    root = (V * sq) @ V.T
    pinv_root = (V * inv_sq) @ V.T
    return SpdFactor(
        base=M,
        root=0.5 * (root + root.T),
        rank=int(keep.sum()),
        pseudo_inverse_root=0.5 * (pinv_root + pinv_root.T),
        eigenvalues=w,
        eigenvectors=V,
    )
