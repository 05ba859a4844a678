"""Exhaustive references for small ``n`` and checks of the deterministic lemmas.

Nothing here calls the trust-region solver: these routines are the
independent side of every solver-vs-truth comparison.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .specmat import SymOp

MLE_MAX_N = 20
SOC_MAX_N = 16
_BLOCK = 1 << 14


@dataclass
class OracleResult:
    best_x: np.ndarray
    best_value: float
    soc_rank1_points: list = field(default_factory=list)
    n_evaluated: int = 0
    n_optimal: int = 0

    def to_dict(self) -> dict:
        return {"best_x": [int(v) for v in self.best_x], "best_value": self.best_value,
                "soc_rank1_points": [[int(v) for v in x] for x in self.soc_rank1_points],
                "n_evaluated": self.n_evaluated, "n_optimal": self.n_optimal}

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _gray_signs(n: int, start: int, stop: int) -> np.ndarray:
    """Sign vectors for Gray codes ``start..stop-1`` on ``n - 1`` bits; ``x[0] = +1``."""
    i = np.arange(start, stop, dtype=np.int64)
    g = i ^ (i >> 1)
    bits = (g[:, None] >> np.arange(n - 1, dtype=np.int64)) & 1
    X = np.ones((i.size, n))
    X[:, 1:] = 1.0 - 2.0 * bits
    return X


def _blocks(n: int):
    total = 1 << (n - 1)
    for start in range(0, total, _BLOCK):
        yield _gray_signs(n, start, min(total, start + _BLOCK))


def _dense(A) -> np.ndarray:
    M = A.to_dense() if isinstance(A, SymOp) else np.asarray(A, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("square matrix required")
    return M


def mle_bruteforce(A, n_max: int = MLE_MAX_N) -> OracleResult:
    """``max x^T A x`` over ``x`` in ``{+-1}^n`` by full enumeration (one per sign pair)."""
    M = _dense(A)
    n = M.shape[0]
    if n > n_max:
        raise ValueError(f"n={n} exceeds the exhaustive-search cap {n_max}")
    best_val, best_x, count = -math.inf, None, 0
    vals_all = []
    for X in _blocks(n):
        vals = np.einsum("ij,ij->i", X @ M, X)
        vals_all.append(vals)
        k = int(np.argmax(vals))
        if vals[k] > best_val:
            best_val, best_x = float(vals[k]), X[k].copy()
        count += X.shape[0]
    vals = np.concatenate(vals_all)
    n_opt = int(np.sum(vals >= best_val - 1e-9 * max(1.0, abs(best_val))))
    return OracleResult(best_x=best_x, best_value=best_val, n_evaluated=count, n_optimal=n_opt)


def soc_matrix(M: np.ndarray, x: np.ndarray) -> np.ndarray:
    """``diag((M x) o x) - M o (x x^T)`` -- the second-order matrix at ``[x 0]``."""
    return np.diag((M @ x) * x) - M * np.outer(x, x)


def enumerate_soc_rank1(A, n_max: int = SOC_MAX_N, rel_tol: float = 1e-10) -> list[np.ndarray]:
    """All sign vectors (``x[0] = +1``) whose rank-one point is second-order critical.

    Every rank-one point already satisfies the first-order condition, so only
    positive semidefiniteness of :func:`soc_matrix` is tested, with tolerance
    ``rel_tol * n * ||A||``.
    """
    M = _dense(A)
    n = M.shape[0]
    if n > n_max:
        raise ValueError(f"n={n} exceeds the enumeration cap {n_max}")
    thr = rel_tol * n * max(float(np.abs(np.linalg.eigvalsh(M)).max()), 1e-300)
    found = []
    for X in _blocks(n):
        MX = X @ M  # rows: (M x)^T
        H = -M[None, :, :] * (X[:, :, None] * X[:, None, :])
        idx = np.arange(n)
        H[:, idx, idx] += MX * X
        lam = np.linalg.eigvalsh(H)[:, 0]
        for k in np.flatnonzero(lam >= -thr):
            found.append(X[k].copy())
    return found


def first_order_residual_rank1(A, x: np.ndarray) -> float:
    """``||(ddiag(A x x^T) - A) [x 0]||_F`` -- identically zero for sign vectors."""
    M = _dense(A)
    Mx = M @ x
    return float(np.linalg.norm((Mx * x) * x - Mx))


def audit_rank_one_optimality(A, rel_tol: float = 1e-9) -> tuple[int, list]:
    """Return ``(number of SOC rank-1 points, counterexamples)`` for one matrix.

    A counterexample is an enumerated point whose value falls short of the
    exhaustive optimum by more than ``rel_tol * n * ||A||``.
    """
    M = _dense(A)
    best = mle_bruteforce(M)
    pts = enumerate_soc_rank1(M)
    slack = rel_tol * M.shape[0] * float(np.abs(np.linalg.eigvalsh(M)).max())
    bad = [x for x in pts if float(x @ M @ x) < best.best_value - slack]
    return len(pts), bad


# ---------------------------------------------------------------------------
# deterministic lemmas


@dataclass
class LemmaCheck:
    name: str
    hypothesis: bool
    bound: float
    value: float
    conclusion: bool
    note: str = ""


@dataclass
class LemmaReport:
    n: int
    gamma: float
    c: float
    eps: float
    surrogate_sdp: bool
    checks: list

    def by_name(self, name: str) -> LemmaCheck:
        for ch in self.checks:
            if ch.name == name:
                return ch
        raise KeyError(name)

    def to_dict(self) -> dict:
        return asdict(self)


def verify_deterministic_lemmas(z: np.ndarray, Delta: SymOp, c: float, Q: np.ndarray,
                                eps: float = 0.0, gamma: float | None = None,
                                sdp_over_n: float | None = None, spec_norm: float | None = None,
                                exact_tol: float | None = None) -> LemmaReport:
    """Evaluate hypotheses and conclusions of the correlation and rank-one results.

    The cost matrix is ``z z^T + c sqrt(n) Delta``; ``Q`` is a point whose
    second-order matrix satisfies ``H(Q) >= -eps I``.

    * ``"X-correlation"``: if ``SDP(Delta)/n <= gamma sqrt(n)`` then
      ``<z z^T, Q Q^T>/n^2 >= 1/2 - 2 gamma c - eps/n``.
    * ``"Q-correlation"``: if also ``||Delta|| <= gamma sqrt(n)`` then
      ``||Q^T z||/n >= 1 - 8 gamma c``.
    * ``"rank-one"``: if ``diag(Delta) = 0``, ``||Delta z||_inf <= gamma
      sqrt(n log n)`` and ``gamma c < 1/(9 + sqrt(log n) + 4 sqrt(gamma c n))``
      then ``Q Q^T = z z^T``.

    Without ``sdp_over_n``, the first hypothesis uses ``||Delta||`` in its
    place (valid since ``SDP(M) <= n ||M||``) and ``surrogate_sdp`` is set.
    """
    from .recover import frobenius_gap
    from .specmat import spectral_norm

    z = np.asarray(z, dtype=float)
    n = z.size
    s_norm = spec_norm if spec_norm is not None else spectral_norm(Delta, tol=1e-9 * max(1.0, n))
    inf = float(np.abs(Delta.matvec(z)).max())
    logn = math.log(n) if n > 1 else 0.0
    surrogate = sdp_over_n is None
    sdp_n = s_norm if surrogate else sdp_over_n
    if gamma is None:
        gamma = max(s_norm / math.sqrt(n), inf / math.sqrt(n * logn) if logn > 0 else 0.0)
    gc = gamma * c
    slack = 1e-9

    X_corr = float(np.sum((Q.T @ z) ** 2)) / n**2
    Q_corr = math.sqrt(X_corr)
    checks = []
    h2 = sdp_n <= gamma * math.sqrt(n) * (1 + slack)
    b2 = 0.5 - 2.0 * gc - eps / n
    checks.append(LemmaCheck("X-correlation", h2, b2, X_corr, X_corr >= b2 - slack,
                             "surrogate ||Delta|| for SDP(Delta)/n" if surrogate else ""))
    h3 = h2 and s_norm <= gamma * math.sqrt(n) * (1 + slack)
    b3 = 1.0 - 8.0 * gc
    checks.append(LemmaCheck("Q-correlation", h3, b3, Q_corr, Q_corr >= b3 - slack))
    zero_diag = bool(np.all(Delta.diagonal() == 0))
    h_rank = (zero_diag and s_norm <= gamma * math.sqrt(n) * (1 + slack)
              and inf <= gamma * math.sqrt(n * logn) * (1 + slack)
              and gc < 1.0 / (9.0 + math.sqrt(logn) + 4.0 * math.sqrt(gc * n)))
    gap = frobenius_gap(Q, z)
    tol = exact_tol if exact_tol is not None else 1e-6 * n
    checks.append(LemmaCheck("rank-one", h_rank, 0.0, gap, gap <= tol))
    return LemmaReport(n=n, gamma=gamma, c=c, eps=eps, surrogate_sdp=surrogate, checks=checks)
