"""Deterministic dense linear algebra used by the compression pipeline.

All decompositions run in double precision regardless of the precision of
the surrounding model, and follow fixed sign / tie-breaking conventions so
that repeated runs produce bit-identical bases.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, DimensionError, ShapeError

# Cyclic Jacobi settings: off-diagonal Frobenius threshold relative to the
# input norm, and the sweep budget before giving up.
_JACOBI_REL_THRESHOLD = 1e-12
_JACOBI_MAX_SWEEPS = 100

_SIGN_EPS = 1e-12


@dataclass(frozen=True)
class EigenDecomposition:
    """Eigenvalues sorted descending; eigenvector columns aligned with them."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def mean_subtraction_matrix(d: int) -> np.ndarray:
    """Return M = I - (1/d) 11^T, the row mean-subtraction matrix."""
    if d < 1:
        raise DimensionError(f"mean subtraction matrix needs d >= 1, got {d}")
    return np.eye(d) - np.full((d, d), 1.0 / d)


def transpose(a: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(a.T)


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return a @ b


def frobenius_norm(a: np.ndarray) -> float:
    return float(np.linalg.norm(a.astype(np.float64, copy=False)))


def is_orthogonal(q: np.ndarray, tol: float = 1e-10) -> bool:
    if q.ndim != 2 or q.shape[0] != q.shape[1]:
        return False
    qd = q.astype(np.float64, copy=False)
    return bool(np.max(np.abs(qd.T @ qd - np.eye(q.shape[0]))) <= tol)


def random_orthogonal(d: int, seed: int) -> np.ndarray:
    """Deterministic random orthogonal matrix from a seeded Gaussian + QR.

    The diagonal-sign correction makes the factorisation unique, so a fixed
    (d, seed) pair always yields a bit-identical matrix.
    """
    if d < 1:
        raise DimensionError(f"random_orthogonal needs d >= 1, got {d}")
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((d, d))
    q, r = np.linalg.qr(g)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    q = q * signs
    # flip columns so the diagonal of Q is non-negative (fixes d=1 to [[1.0]])
    signs = np.sign(np.diag(q))
    signs[signs == 0] = 1.0
    return q * signs


def _fix_column_signs(v: np.ndarray) -> np.ndarray:
    """Flip eigenvector columns so the first non-negligible component is >= 0."""
    for j in range(v.shape[1]):
        col = v[:, j]
        nz = np.nonzero(np.abs(col) > _SIGN_EPS)[0]
        if nz.size and col[nz[0]] < 0.0:
            v[:, j] = -col
    return v


def eigh_descending(c: np.ndarray) -> EigenDecomposition:
    """Symmetric eigendecomposition by cyclic Jacobi rotations, in double.

    Eigenvalues come back sorted descending; ties keep the ascending order of
    the diagonal index they settled on, and each eigenvector's first
    non-negligible component is made non-negative.
    """
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise ShapeError(f"eigh_descending expects a square matrix, got {c.shape}")
    a = np.array(c, dtype=np.float64)
    n = a.shape[0]
    max_abs = np.max(np.abs(a)) if n else 0.0
    asym = np.max(np.abs(a - a.T))
    if max_abs > 0 and asym > 1e-9 * max_abs:
        raise ShapeError(f"matrix is not symmetric (relative asymmetry {asym / max_abs:.3e})")
    a = 0.5 * (a + a.T)

    v = np.eye(n)
    norm = np.linalg.norm(a)
    threshold = _JACOBI_REL_THRESHOLD * norm
    off = _offdiag_norm(a)
    if norm > 0:
        converged = off <= threshold
        for _ in range(_JACOBI_MAX_SWEEPS):
            if converged:
                break
            skip = threshold / max(n, 1)
            for p in range(n - 1):
                for q in range(p + 1, n):
                    apq = a[p, q]
                    if abs(apq) <= skip:
                        continue
                    theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                    t = np.sign(theta) / (abs(theta) + np.hypot(theta, 1.0))
                    if theta == 0.0:
                        t = 1.0
                    cs = 1.0 / np.sqrt(t * t + 1.0)
                    sn = t * cs
                    _rotate(a, v, p, q, cs, sn)
            off = _offdiag_norm(a)
            converged = off <= threshold
        if not converged:
            raise ConvergenceError("Jacobi eigensolver did not converge", residual=float(off))

    vals = np.diag(a).copy()
    order = np.argsort(-vals, kind="stable")
    vals = vals[order]
    vecs = _fix_column_signs(v[:, order])
    return EigenDecomposition(eigenvalues=vals, eigenvectors=vecs)


def _offdiag_norm(a: np.ndarray) -> float:
    off = a - np.diag(np.diag(a))
    return float(np.linalg.norm(off))


def _rotate(a: np.ndarray, v: np.ndarray, p: int, q: int, cs: float, sn: float) -> None:
    # Two-sided Givens update A <- J^T A J plus accumulation V <- V J.
    ap = a[:, p].copy()
    aq = a[:, q].copy()
    a[:, p] = cs * ap - sn * aq
    a[:, q] = sn * ap + cs * aq
    rp = a[p, :].copy()
    rq = a[q, :].copy()
    a[p, :] = cs * rp - sn * rq
    a[q, :] = sn * rp + cs * rq
    vp = v[:, p].copy()
    vq = v[:, q].copy()
    v[:, p] = cs * vp - sn * vq
    v[:, q] = sn * vp + cs * vq
