"""Tolerance conventions and kernel/rank helpers shared by every module."""

from __future__ import annotations

import numpy as np

REL_TOL = 1e-9
ABS_TOL = 1e-12
KERNEL_TOL = 1e-8


def close(a, b, rel: float = REL_TOL, floor: float = ABS_TOL) -> bool:
    """Compare two arrays relative to the largest magnitude involved."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    scale = max(np.max(np.abs(a), initial=0.0), np.max(np.abs(b), initial=0.0))
    return bool(np.max(np.abs(a - b), initial=0.0) <= max(rel * scale, floor))


def singular_values(A: np.ndarray) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return np.zeros(0)
    return np.linalg.svd(A, compute_uv=False)


def _cutoff(s: np.ndarray, tol: float) -> float:
    smax = s[0] if s.size else 0.0
    return tol * max(1.0, smax)


def numerical_rank(A: np.ndarray, tol: float = KERNEL_TOL) -> int:
    s = singular_values(A)
    return int(np.sum(s > _cutoff(s, tol)))


def nullspace(A: np.ndarray, tol: float = KERNEL_TOL) -> np.ndarray:
    """Orthonormal basis (columns) of ker A.

    Singular values below ``tol * max(1, sigma_max)`` count as zero.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[1]
    if A.shape[0] == 0 or n == 0:
        return np.eye(n)
    # the economy SVD already carries a full set of right vectors for tall A
    _, s, vh = np.linalg.svd(A, full_matrices=A.shape[0] < n)
    rank = int(np.sum(s > _cutoff(s, tol)))
    return vh[rank:].T.copy()


def orth(A: np.ndarray, tol: float = KERNEL_TOL) -> np.ndarray:
    """Orthonormal basis of the column span of A."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape[1] == 0:
        return np.zeros((A.shape[0], 0))
    u, s, _ = np.linalg.svd(A, full_matrices=False)
    rank = int(np.sum(s > _cutoff(s, tol)))
    return u[:, :rank]


def inv_sqrt_psd(G: np.ndarray) -> np.ndarray:
    """G^{-1/2} for a symmetric positive definite G."""
    w, v = np.linalg.eigh((G + G.T) / 2)
    if w.size and w[0] <= 0:
        raise np.linalg.LinAlgError("matrix is not positive definite")
    return (v / np.sqrt(w)) @ v.T


def orthonormalize(V: np.ndarray, G: np.ndarray) -> np.ndarray:
    """Symmetric (Loewdin) orthonormalization of the columns of V w.r.t. G.

    Columns that are already G-orthonormal are returned unchanged, and a
    uniformly scaled orthogonal family is only rescaled.
    """
    if V.shape[1] == 0:
        return V.copy()
    gram = V.T @ G @ V
    return V @ inv_sqrt_psd(gram)


def projector_distance(U: np.ndarray, V: np.ndarray, G: np.ndarray | None = None) -> float:
    """Spectral distance between the orthogonal projectors onto span U and span V."""
    if G is None:
        G = np.eye(U.shape[0])

    def proj(W):
        if W.shape[1] == 0:
            return np.zeros((W.shape[0], W.shape[0]))
        W = orthonormalize(W, G)
        return W @ W.T @ G

    return float(np.linalg.norm(proj(U) - proj(V), 2))
