"""Correlation metrics, Gaussian rounding, exact-recovery test, spectral baseline."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .specmat import SymOp, extreme_eigenpair, default_eig_tol


@dataclass(frozen=True)
class RecoveryMetrics:
    correlation: float
    overlap: float
    exact: bool
    frobenius_gap: float

    def to_dict(self) -> dict:
        return asdict(self)


def correlation(Q: np.ndarray, z: np.ndarray) -> float:
    """``||Q^T z||_2 / n``."""
    Q = np.asarray(Q, dtype=float)
    if Q.shape[0] != len(z):
        raise ValueError("dimension mismatch")
    return float(np.linalg.norm(Q.T @ z)) / Q.shape[0]


def overlap(zhat: np.ndarray, z: np.ndarray) -> float:
    """``|<zhat, z>| / n`` -- sign-invariant agreement of two label vectors."""
    return abs(float(np.dot(zhat, z))) / len(z)


def round_gaussian(Q: np.ndarray, rng=None) -> np.ndarray:
    """``sign(Q g)`` for ``g`` standard normal in ``R^p``; exact zeros map to +1."""
    rng = np.random.default_rng(rng)
    g = rng.standard_normal(Q.shape[1])
    s = np.sign(Q @ g)
    s[s == 0] = 1.0
    return s


def frobenius_gap(Q: np.ndarray, z: np.ndarray) -> float:
    """``||Q Q^T - z z^T||_F`` without forming ``n x n`` matrices.

    Expanding to ``||Q^T Q||_F^2 - 2 ||Q^T z||^2 + n^2`` cancels terms of
    size ``n^2`` and leaves an error near ``n sqrt(eps)``, which is too coarse
    for exact-recovery thresholds. Instead ``Q`` is split along
    ``u = Q^T z / ||Q^T z||``: with ``a = Q u``, ``e = a - z`` and ``B`` the
    remaining columns ``Q U_perp``, ``Q Q^T - z z^T = e z^T + z e^T + e e^T + B B^T``,
    whose norm is ``sqrt(tr((C G)^2))`` for the small Gram matrix ``G`` of
    ``[z, e, B]``.
    """
    Q = np.asarray(Q, dtype=float)
    z = np.asarray(z, dtype=float)
    n, p = Q.shape
    if n != z.size:
        raise ValueError("dimension mismatch")
    if n == 0:
        return 0.0
    w = Q.T @ z
    nw = float(np.linalg.norm(w))
    if nw == 0.0:
        u = np.eye(p)[0]
    else:
        u = w / nw
    # orthonormal basis with u first
    basis, _ = np.linalg.qr(np.column_stack([u, np.eye(p)]))
    basis[:, 0] = u
    Uperp = basis[:, 1:p]
    e = Q @ u - z
    F = np.column_stack([z, e, Q @ Uperp])
    C = np.zeros((p + 1, p + 1))
    C[0, 1] = C[1, 0] = C[1, 1] = 1.0
    C[2:, 2:] = np.eye(p - 1)
    CG = C @ (F.T @ F)
    return float(np.sqrt(max(float(np.sum(CG * CG.T)), 0.0)))


def exact_recovery(Q: np.ndarray, z: np.ndarray, tol: float | None = None) -> bool:
    if tol is None:
        tol = 1e-6 * len(z)
    if tol <= 0:
        raise ValueError("tol must be positive")
    return frobenius_gap(Q, z) <= tol


def metrics(Q: np.ndarray, z: np.ndarray, rng=None, tol: float | None = None) -> RecoveryMetrics:
    gap = frobenius_gap(Q, z)
    tol = 1e-6 * len(z) if tol is None else tol
    return RecoveryMetrics(correlation(Q, z), overlap(round_gaussian(Q, rng), z), gap <= tol, gap)


class _ZeroDiag(SymOp):
    def __init__(self, Y: SymOp):
        self.Y, self.n = Y, Y.n
        self._d = Y.diagonal()

    def _apply(self, v):
        dv = self._d * v if v.ndim == 1 else self._d[:, None] * v
        return self.Y.matmat(v) - dv

    def diagonal(self):
        return np.zeros(self.n)


def spectral_baseline(Y: SymOp, seed: int = 0) -> np.ndarray:
    """Signs of the top eigenvector of ``Y`` with its diagonal removed."""
    op = _ZeroDiag(Y)
    v = extreme_eigenpair(op, "largest", tol=default_eig_tol(op, 1e-8), seed=seed).vector
    s = np.sign(v)
    s[s == 0] = 1.0
    return s
