"""Symmetric linear operators and extreme-eigenvalue primitives.

Every cost matrix in the package is a :class:`SymOp`. Three concrete forms
are provided:

* :class:`DenseOp` -- an explicit symmetric array;
* :class:`SpikeNoiseOp` -- ``z z^T + sigma * Delta`` with ``Delta`` dense or
  sparse, never materializing the rank-one spike;
* :class:`CenteredAdjacencyOp` -- ``A - shift * 1 1^T`` for a sparse 0/1
  adjacency matrix, never densified.

:class:`SparseLowRankOp` is the common generalization (sparse part plus a
few weighted rank-one terms) used for the SBM noise matrix.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh

DENSE_EIG_MAX_N = 64


class EigenNonConvergence(RuntimeError):
    """Raised when the iterative eigensolver misses its residual contract."""


class SymOp:
    """Base class for immutable symmetric operators of size ``n``."""

    n: int

    def matvec(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape[0] != self.n:
            raise ValueError(f"dimension mismatch: operator has n={self.n}, got {v.shape[0]}")
        return self._apply(v)

    def matmat(self, V: np.ndarray) -> np.ndarray:
        """Apply to each column of ``V`` (shape ``(n, k)``)."""
        return self.matvec(V)

    def __matmul__(self, v):
        return self.matvec(v)

    def _apply(self, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def diagonal(self) -> np.ndarray:
        raise NotImplementedError

    def to_dense(self) -> np.ndarray:
        return self._apply(np.eye(self.n))

    def as_linear_operator(self) -> LinearOperator:
        return LinearOperator((self.n, self.n), matvec=self._apply, matmat=self._apply,
                              rmatvec=self._apply, dtype=float)


@dataclass(frozen=True, eq=False)
class DenseOp(SymOp):
    """Explicit symmetric matrix. Nonzero diagonals are kept as given."""

    M: np.ndarray

    def __post_init__(self):
        M = np.asarray(self.M, dtype=float)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise ValueError("DenseOp needs a square matrix")
        if not np.allclose(M, M.T, rtol=0, atol=1e-12 * max(1.0, np.abs(M).max(initial=0.0))):
            raise ValueError("DenseOp matrix is not symmetric")
        # exact symmetry regardless of input rounding
        M = 0.5 * (M + M.T)
        M.setflags(write=False)
        object.__setattr__(self, "M", M)

    @property
    def n(self) -> int:
        return self.M.shape[0]

    def _apply(self, v):
        return self.M @ v

    def diagonal(self):
        return np.diag(self.M).copy()

    def to_dense(self):
        return np.array(self.M)


def _freeze_noise(Delta):
    if sp.issparse(Delta):
        D = sp.csr_matrix(Delta, dtype=float)
        D = (0.5 * (D + D.T)).tocsr()
        return D
    D = np.asarray(Delta, dtype=float)
    D = 0.5 * (D + D.T)
    D.setflags(write=False)
    return D


@dataclass(frozen=True, eq=False)
class SpikeNoiseOp(SymOp):
    """``A = z z^T + sigma * Delta`` with ``Delta`` dense or scipy-sparse."""

    z: np.ndarray
    Delta: object
    sigma: float

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float)
        if z.ndim != 1:
            raise ValueError("z must be a vector")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        D = _freeze_noise(self.Delta)
        if D.shape != (z.size, z.size):
            raise ValueError("noise matrix shape does not match z")
        z.setflags(write=False)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "Delta", D)
        object.__setattr__(self, "sigma", float(self.sigma))

    @property
    def n(self) -> int:
        return self.z.size

    def _apply(self, v):
        if v.ndim == 1:
            out = self.z * (self.z @ v)
        else:
            out = np.outer(self.z, self.z @ v)
        if self.sigma != 0.0:
            out = out + self.sigma * (self.Delta @ v)
        return out

    def diagonal(self):
        d = self.Delta.diagonal() if sp.issparse(self.Delta) else np.diag(self.Delta)
        return self.z**2 + self.sigma * np.asarray(d)


@dataclass(frozen=True, eq=False)
class SparseLowRankOp(SymOp):
    """``S + sum_k weights[k] * U[:, k] U[:, k]^T`` with ``S`` sparse symmetric."""

    S: sp.csr_matrix
    U: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        S = sp.csr_matrix(self.S, dtype=float)
        if S.shape[0] != S.shape[1]:
            raise ValueError("sparse part must be square")
        if abs(S - S.T).max() > 0:
            raise ValueError("sparse part is not symmetric")
        U = np.asarray(self.U, dtype=float).reshape(S.shape[0], -1)
        w = np.asarray(self.weights, dtype=float).ravel()
        if w.size != U.shape[1]:
            raise ValueError("one weight per low-rank column is required")
        U.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.S.shape[0]

    def _apply(self, v):
        out = self.S @ v
        coef = self.U.T @ v
        if v.ndim == 1:
            return out + self.U @ (self.weights * coef)
        return out + self.U @ (self.weights[:, None] * coef)

    def diagonal(self):
        return self.S.diagonal() + (self.U**2) @ self.weights


class CenteredAdjacencyOp(SparseLowRankOp):
    """``A - shift * 1 1^T`` for a sparse symmetric 0/1 adjacency ``A``."""

    def __init__(self, adjacency, shift: float):
        n = adjacency.shape[0]
        super().__init__(adjacency, np.ones((n, 1)), np.array([-float(shift)]))

    @property
    def adjacency(self) -> sp.csr_matrix:
        return self.S

    @property
    def shift(self) -> float:
        return -float(self.weights[0])


def densify(op: SymOp) -> DenseOp:
    return op if isinstance(op, DenseOp) else DenseOp(op.to_dense())


# ---------------------------------------------------------------------------
# eigen primitives


@dataclass(frozen=True)
class EigResult:
    value: float
    vector: np.ndarray
    residual: float
    iterations: int


def _start_vector(n: int, seed: int) -> np.ndarray:
    v = np.random.default_rng(seed).standard_normal(n)
    return v / np.linalg.norm(v)


def extreme_eigenpair(op: SymOp, which: str = "smallest", tol: float = 1e-8,
                      max_iter: int | None = None, seed: int = 0) -> EigResult:
    """Extreme eigenpair of a symmetric operator.

    Parameters
    ----------
    op : SymOp
    which : {"smallest", "largest"}
    tol : float
        Absolute bound on the returned residual ``||A v - lambda v||``.
    max_iter : int, optional
        Lanczos restart budget (ARPACK ``maxiter``); defaults to ``10 n``.
    seed : int
        Seed of the deterministic start vector.

    Raises
    ------
    EigenNonConvergence
        If the residual contract cannot be met within ``max_iter``.
    """
    if which not in ("smallest", "largest"):
        raise ValueError("which must be 'smallest' or 'largest'")
    if tol <= 0:
        raise ValueError("tol must be positive")
    n = op.n
    if n <= DENSE_EIG_MAX_N:
        M = op.to_dense()
        vals, vecs = np.linalg.eigh(M)
        k = 0 if which == "smallest" else -1
        lam, v = float(vals[k]), vecs[:, k]
        res = float(np.linalg.norm(op.matvec(v) - lam * v))
        if res > tol:
            raise EigenNonConvergence(f"dense eigensolver residual {res:.3e} exceeds tol {tol:.3e}")
        return EigResult(lam, v, res, 1)

    counter = [0]
    # ARPACK stops on |residual| <= tol * |theta|, which never fires for a
    # target eigenvalue at 0; run on a shifted operator whose target is ~shift
    shift = 2.0 * _norm_bound(op) + 1.0
    sign = -1.0 if which == "smallest" else 1.0

    def mv(x):
        x = np.asarray(x)
        counter[0] += 1
        y = op.matvec(x.reshape(n, -1)).reshape(x.shape)
        return shift * x + sign * y

    lin = LinearOperator((n, n), matvec=mv, dtype=float)
    v0 = _start_vector(n, seed)
    maxiter = max_iter if max_iter is not None else 10 * n
    ncv = min(n, 40)
    arpack_tol = max(0.1 * tol / (3.0 * shift), 1e-15)
    try:
        vals, vecs = eigsh(lin, k=1, which="LA", v0=v0, tol=arpack_tol, maxiter=maxiter, ncv=ncv)
    except ArpackNoConvergence as exc:
        raise EigenNonConvergence(f"Lanczos did not converge in {maxiter} restarts") from exc
    v = vecs[:, 0] / np.linalg.norm(vecs[:, 0])
    Av = op.matvec(v)
    lam = float(v @ Av)
    res = float(np.linalg.norm(Av - lam * v))
    if res > tol:
        raise EigenNonConvergence(f"Lanczos residual {res:.3e} exceeds tol {tol:.3e}")
    return EigResult(lam, v, res, counter[0])


def spectral_norm(op: SymOp, tol: float = 1e-8, seed: int = 0) -> float:
    """Operator norm ``max(|lambda_min|, |lambda_max|)``."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    if op.n <= DENSE_EIG_MAX_N:
        return float(np.abs(np.linalg.eigvalsh(op.to_dense())).max())
    lo = extreme_eigenpair(op, "smallest", tol=tol, seed=seed)
    hi = extreme_eigenpair(op, "largest", tol=tol, seed=seed + 1)
    return max(abs(lo.value), abs(hi.value))


def default_eig_tol(op: SymOp, rel: float = 1e-9) -> float:
    """Absolute residual tolerance scaled to a cheap bound on ``||A||``."""
    return rel * max(1.0, _norm_bound(op))


def _norm_bound(op: SymOp) -> float:
    # a few power steps: lower bound on ||A|| within a small factor
    v = _start_vector(op.n, 12345)
    est = 0.0
    for _ in range(5):
        w = op.matvec(v)
        nw = float(np.linalg.norm(w))
        if nw == 0.0:
            break
        est = nw
        v = w / nw
    return est


# ---------------------------------------------------------------------------
# coordinate text format

def save_coo(path, op_or_matrix) -> None:
    """Write the upper triangle as ``i j value`` triplets under an ``n`` header."""
    if isinstance(op_or_matrix, SymOp):
        if isinstance(op_or_matrix, SparseLowRankOp) and op_or_matrix.weights.size == 0:
            M = op_or_matrix.S
        else:
            M = op_or_matrix.to_dense()
    else:
        M = op_or_matrix
    M = sp.triu(sp.coo_matrix(M)).tocoo()
    order = np.lexsort((M.col, M.row))
    with open(Path(path), "w") as fh:
        fh.write(f"{M.shape[0]}\n")
        for i, j, v in zip(M.row[order], M.col[order], M.data[order]):
            fh.write(f"{i} {j} {v:.17g}\n")


def load_coo(path) -> sp.csr_matrix:
    """Read a coordinate file back as a symmetric sparse matrix."""
    with open(Path(path)) as fh:
        header = fh.readline().split()
        if len(header) != 1:
            raise ValueError(f"{path}: first line must hold n only")
        n = int(header[0])
        rows, cols, vals = [], [], []
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected 'i j value'")
            i, j, v = int(parts[0]), int(parts[1]), float(parts[2])
            if not (0 <= i <= j < n):
                raise ValueError(f"{path}:{lineno}: index out of upper triangle")
            rows.append(i)
            cols.append(j)
            vals.append(v)
    U = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    return (U + sp.triu(U, k=1).T).tocsr()
