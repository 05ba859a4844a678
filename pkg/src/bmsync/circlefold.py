"""Calculus on the product of circles (n x 2 matrices with unit rows).

Tangent vectors are stored as one scalar per row: ``alpha[i]`` multiplies the
row rotated by 90 degrees, ``J q_i`` with ``J = [[0, -1], [1, 0]]``. In these
coordinates the manifold is locally the flat torus, so with the exact
per-row rotation as retraction:

* the Riemannian gradient of ``f(Q) = Tr(Q^T A Q)`` has entries
  ``2 <(AQ)_i, J q_i>``;
* the Riemannian Hessian is ``-2 H(Q)`` with
  ``H(Q) = ddiag(A Q Q^T) - A o (Q Q^T)``.

``H(Q) >= 0`` is therefore exactly the second-order necessary condition for a
maximizer, and ``(ddiag(A Q Q^T) - A) Q`` has Frobenius norm ``||alpha|| / 2``.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .specmat import SymOp

J = np.array([[0.0, -1.0], [1.0, 0.0]])


def check_unit_rows(Q: np.ndarray, atol: float = 1e-12) -> None:
    norms = np.linalg.norm(Q, axis=1)
    bad = np.abs(norms - 1.0) > atol
    if bad.any():
        raise ValueError(f"{int(bad.sum())} rows are off the unit sphere (max dev {np.abs(norms - 1).max():.2e})")


def normalize_rows(Q: np.ndarray) -> np.ndarray:
    Q = np.asarray(Q, dtype=float)
    norms = np.linalg.norm(Q, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("cannot normalize a zero row")
    return Q / norms


def random_point(n: int, rng) -> np.ndarray:
    """Rows independently uniform on the unit circle."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(rng)
    theta = rng.uniform(0.0, 2.0 * np.pi, size=n)
    return np.column_stack([np.cos(theta), np.sin(theta)])


def random_oblique_point(n: int, p: int, rng) -> np.ndarray:
    rng = np.random.default_rng(rng)
    return normalize_rows(rng.standard_normal((n, p)))


def rotate90(Q: np.ndarray) -> np.ndarray:
    """Rows ``J q_i``."""
    return np.column_stack([-Q[:, 1], Q[:, 0]])


def tangent_to_ambient(Q: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    return alpha[:, None] * rotate90(Q)


def retract(Q: np.ndarray, alpha: np.ndarray, t: float = 1.0) -> np.ndarray:
    """Rotate row ``i`` by angle ``t * alpha[i]`` (exponential map per circle)."""
    ang = t * np.asarray(alpha, dtype=float)
    c, s = np.cos(ang), np.sin(ang)
    out = c[:, None] * Q + s[:, None] * rotate90(Q)
    # cos/sin rounding drifts norms by ~1 ulp per call; renormalize to stay exact
    return out / np.linalg.norm(out, axis=1, keepdims=True)


def cost(A: SymOp, Q: np.ndarray) -> float:
    """``Tr(Q^T A Q)`` via one block product (``p`` matvecs)."""
    if Q.shape[0] != A.n:
        raise ValueError(f"dimension mismatch: A has n={A.n}, Q has {Q.shape[0]} rows")
    return float(np.sum(Q * A.matmat(Q)))


def row_inner(AQ: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """``d_i = (A Q Q^T)_ii`` given ``AQ``."""
    return np.einsum("ij,ij->i", AQ, Q)


def rgrad(A: SymOp, Q: np.ndarray, AQ: np.ndarray | None = None) -> np.ndarray:
    """Riemannian gradient coefficients ``2 <(AQ)_i, J q_i>``."""
    if Q.shape[0] != A.n:
        raise ValueError(f"dimension mismatch: A has n={A.n}, Q has {Q.shape[0]} rows")
    if AQ is None:
        AQ = A.matmat(Q)
    return 2.0 * row_inner(AQ, rotate90(Q))


class HessOp(SymOp):
    """``H(Q) = ddiag(A Q Q^T) - A o (Q Q^T)`` as a matrix-free operator.

    ``(H v)_i = d_i v_i - sum_j A_ij <q_i, q_j> v_j``, evaluated with one
    block product ``A (Q o v)``.
    """

    def __init__(self, A: SymOp, Q: np.ndarray, AQ: np.ndarray | None = None):
        if Q.shape[0] != A.n:
            raise ValueError(f"dimension mismatch: A has n={A.n}, Q has {Q.shape[0]} rows")
        self.A = A
        self.Q = np.array(Q)
        self.Q.setflags(write=False)
        if AQ is None:
            AQ = A.matmat(self.Q)
        self.d = row_inner(AQ, self.Q)
        self.n = A.n

    def _apply(self, v):
        Q = self.Q
        if v.ndim == 1:
            W = self.A.matmat(Q * v[:, None])
            return self.d * v - np.einsum("ij,ij->i", Q, W)
        n, k = v.shape
        p = Q.shape[1]
        # stack the p weighted copies of every column into one block product
        B = (Q[:, :, None] * v[:, None, :]).reshape(n, p * k)
        W = self.A.matmat(B).reshape(n, p, k)
        return self.d[:, None] * v - np.einsum("ip,ipk->ik", Q, W)

    def diagonal(self):
        return self.d - self.A.diagonal()

    def to_dense(self):
        M = self.A.to_dense()
        return np.diag(self.d) - M * (self.Q @ self.Q.T)


def hess_matrix(A: SymOp, Q: np.ndarray, AQ: np.ndarray | None = None) -> HessOp:
    return HessOp(A, Q, AQ)


def first_order_residual_matrix(A: SymOp, Q: np.ndarray, AQ: np.ndarray | None = None) -> np.ndarray:
    """``(ddiag(A Q Q^T) - A) Q`` computed directly in the ambient space."""
    if AQ is None:
        AQ = A.matmat(Q)
    return row_inner(AQ, Q)[:, None] * Q - AQ


# ---------------------------------------------------------------------------
# rank-p (oblique) helpers used by the staircase


def oblique_project(Q: np.ndarray, Z: np.ndarray) -> np.ndarray:
    return Z - np.einsum("ij,ij->i", Q, Z)[:, None] * Q


def oblique_rgrad(A: SymOp, Q: np.ndarray, AQ: np.ndarray | None = None) -> np.ndarray:
    if AQ is None:
        AQ = A.matmat(Q)
    return 2.0 * oblique_project(Q, AQ)


def oblique_hess(A: SymOp, Q: np.ndarray, U: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Riemannian Hessian of the cost on the oblique manifold applied to ``U``."""
    return 2.0 * (oblique_project(Q, A.matmat(U)) - d[:, None] * U)


def oblique_retract(Q: np.ndarray, U: np.ndarray) -> np.ndarray:
    return normalize_rows(Q + U)


# ---------------------------------------------------------------------------
# text serialization


@dataclass(frozen=True)
class CirclePoint:
    """Thin immutable wrapper when a typed point is wanted at an interface."""

    Q: np.ndarray

    def __post_init__(self):
        Q = np.array(self.Q, dtype=float)
        if Q.ndim != 2 or Q.shape[1] < 2:
            raise ValueError("a point needs shape (n, p) with p >= 2")
        check_unit_rows(Q)
        Q.setflags(write=False)
        object.__setattr__(self, "Q", Q)

    @property
    def n(self) -> int:
        return self.Q.shape[0]


def save_point(path, Q: np.ndarray) -> None:
    with open(Path(path), "w") as fh:
        for row in np.asarray(Q):
            fh.write(" ".join(f"{x:.17g}" for x in row) + "\n")


def format_point(Q: np.ndarray) -> list[list[float]]:
    return [[float(x) for x in row] for row in np.asarray(Q)]


def load_point(path, atol: float = 1e-6) -> np.ndarray:
    """Load rows; re-normalize, rejecting rows whose norm is off by more than ``atol``."""
    Q = np.loadtxt(Path(path), ndmin=2)
    norms = np.linalg.norm(Q, axis=1)
    bad = np.abs(norms - 1.0) > atol
    if bad.any():
        raise ValueError(f"{path}: row {int(np.argmax(bad))} has norm {norms[bad][0]:.9g}, not unit")
    # rows already unit up to rounding are kept bit-exact so save/load round-trips
    drift = np.abs(norms - 1.0) > 1e-15
    Q[drift] /= norms[drift, None]
    return Q
