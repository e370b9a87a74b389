"""Dense symmetric-matrix kernel.

Everything matrix-valued in the package (H, the Lie-derivative matrices, the
Psi functions) is a small dense symmetric array.  The eigensolver is a cyclic
Jacobi iteration: deterministic, dependency-free and accurate for p up to a
few dozen.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import InvalidMatrix

OFFDIAG_TOL = 1e-12
MAX_SWEEPS = 100


class EigPair(NamedTuple):
    values: np.ndarray   # ascending
    vectors: np.ndarray  # column j pairs with values[j]


def as_symmat(a) -> np.ndarray:
    """Return a read-only symmetrized float copy of ``a``.

    Raises InvalidMatrix for non-square, empty or non-finite input.
    """
    m = np.array(a, dtype=float)
    if m.ndim == 0:
        m = m.reshape(1, 1)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
        raise InvalidMatrix(f"expected a non-empty square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise InvalidMatrix("matrix has non-finite entries")
    m = 0.5 * (m + m.T)
    m.setflags(write=False)
    return m


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    # largest-magnitude component of each eigenvector is made positive
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def sym_eig(a) -> EigPair:
    """Eigendecomposition by cyclic Jacobi rotations.

    Eigenvalues are returned in ascending order (stable sort, so ties keep
    the order in which the rotations left them).
    """
    A = np.array(as_symmat(a))
    p = A.shape[0]
    V = np.eye(p)
    tol = max(OFFDIAG_TOL, 4.0 * np.finfo(float).eps * np.linalg.norm(A))
    for _ in range(MAX_SWEEPS):
        off = np.sqrt(2.0 * np.sum(np.triu(A, 1) ** 2))
        if off <= tol:
            break
        for i in range(p - 1):
            for j in range(i + 1, p):
                aij = A[i, j]
                if aij == 0.0:
                    continue
                tau = (A[j, j] - A[i, i]) / (2.0 * aij)
                t = (1.0 if tau >= 0 else -1.0) / (abs(tau) + np.hypot(1.0, tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                ci, cj = A[:, i].copy(), A[:, j].copy()
                A[:, i] = c * ci - s * cj
                A[:, j] = s * ci + c * cj
                ri, rj = A[i, :].copy(), A[j, :].copy()
                A[i, :] = c * ri - s * rj
                A[j, :] = s * ri + c * rj
                A[i, j] = A[j, i] = 0.0
                vi, vj = V[:, i].copy(), V[:, j].copy()
                V[:, i] = c * vi - s * vj
                V[:, j] = s * vi + c * vj
    values = np.diag(A).copy()
    order = np.argsort(values, kind="stable")
    return EigPair(values[order], _fix_signs(V[:, order]))


def lambda_min(a) -> tuple[float, np.ndarray]:
    """Smallest eigenvalue and a unit eigenvector for it."""
    pair = sym_eig(a)
    return float(pair.values[0]), pair.vectors[:, 0]


def lambda_max(a) -> float:
    return float(sym_eig(a).values[-1])


def spectral_norm(a) -> float:
    vals = sym_eig(a).values
    return float(max(abs(vals[0]), abs(vals[-1])))


def matrix_2norm(m) -> float:
    """Spectral norm of a general (rectangular) real matrix."""
    m = np.asarray(m, dtype=float)
    if m.size == 0:
        return 0.0
    gram = m.T @ m if m.shape[0] >= m.shape[1] else m @ m.T
    return float(np.sqrt(max(lambda_max(gram), 0.0)))


def is_psd(a, tol: float = 0.0) -> bool:
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    return lambda_min(a)[0] >= -tol
