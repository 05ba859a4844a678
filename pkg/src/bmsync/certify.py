"""Optimality certificates for the rank-2 program and the diagonal SDP.

All certificates revolve around the dual matrix ``S(Q) = ddiag(A Q Q^T) - A``:
for any feasible ``X``, ``<A, X> = Tr(A Q Q^T) - <S, X>``, so ``S >= 0``
proves that ``Q Q^T`` solves the SDP, and in general
``SDP(A) <= Tr(Q^T A Q) + n * max(0, -lambda_min(S))``.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace

import numpy as np

from . import circlefold as cf
from .solver import SolverConfig, solve_rankp
from .specmat import SymOp, default_eig_tol, extreme_eigenpair, spectral_norm

SECOND_ORDER_CRITICAL = "second-order-critical"
RANK_DEFICIENT_GLOBAL = "rank-deficient-global"
GLOBAL_UNIQUE_GROUND_TRUTH = "global-unique-ground-truth"
INCONCLUSIVE = "inconclusive"
VERDICTS = (SECOND_ORDER_CRITICAL, RANK_DEFICIENT_GLOBAL, GLOBAL_UNIQUE_GROUND_TRUTH, INCONCLUSIVE)

RANK_RATIO = 1e-8
DEFAULT_TOL = 1e-8


class DualOp(SymOp):
    """``S = diag(s) - A`` without densifying ``A``."""

    def __init__(self, A: SymOp, s: np.ndarray):
        self.A, self.s, self.n = A, np.asarray(s, dtype=float), A.n

    def _apply(self, v):
        sv = self.s * v if v.ndim == 1 else self.s[:, None] * v
        return sv - self.A.matmat(v)

    def diagonal(self):
        return self.s - self.A.diagonal()

    def to_dense(self):
        return np.diag(self.s) - self.A.to_dense()


def dual_matrix(A: SymOp, Q: np.ndarray) -> DualOp:
    """``S(Q) = ddiag(A Q Q^T) - A``."""
    return DualOp(A, cf.row_inner(A.matmat(Q), Q))


class _Deflated(SymOp):
    # S + mu * u u^T / ||u||^2 : lifts the known null vector u out of the way
    def __init__(self, S: SymOp, u: np.ndarray, mu: float):
        self.S, self.u, self.mu, self.n = S, u / np.linalg.norm(u), mu, S.n

    def _apply(self, v):
        return self.S.matmat(v) + self.mu * np.multiply.outer(self.u, self.u @ v)

    def diagonal(self):
        return self.S.diagonal() + self.mu * self.u**2

    def to_dense(self):
        return self.S.to_dense() + self.mu * np.outer(self.u, self.u)


def _scale(A: SymOp) -> float:
    """``n * ||A||`` (cheap estimate) -- the natural size of costs and certificates."""
    return A.n * default_eig_tol(A, rel=1.0)


def criticality_residuals(A: SymOp, Q: np.ndarray, tol: float | None = None, seed: int = 0):
    """``(||(ddiag(AQQ^T) - A) Q||_F, lambda_min(ddiag(AQQ^T) - A o QQ^T))``.

    The first residual is formed in the ambient space, independently of the
    solver's tangent-coordinate gradient.
    """
    cf.check_unit_rows(Q, atol=1e-10)
    AQ = A.matmat(Q)
    gres = float(np.linalg.norm(cf.first_order_residual_matrix(A, Q, AQ)))
    H = cf.HessOp(A, Q, AQ)
    eig_tol = tol if tol is not None else DEFAULT_TOL * _scale(A)
    lam = extreme_eigenpair(H, "smallest", tol=eig_tol, seed=seed).value
    return gres, lam


def numerical_rank(Q: np.ndarray, ratio: float = RANK_RATIO) -> int:
    s = np.linalg.svd(Q, compute_uv=False)
    return int(np.sum(s > ratio * s[0]))


@dataclass
class CertificateReport:
    grad_residual: float
    hess_min_eig: float
    s_min_eig: float
    q_rank: int
    verdict: str
    threshold: float
    unique_ground_truth: bool | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def dual_certificate(A: SymOp, Q: np.ndarray, tol: float = DEFAULT_TOL,
                     z: np.ndarray | None = None, seed: int = 0) -> CertificateReport:
    """Classify a rank-2 point.

    ``tol`` is relative: every residual is compared with ``tol * n * ||A||``.
    A second-order critical ``Q`` of numerical rank one is a global optimum
    (``rank-deficient-global``). When the ground truth ``z`` is supplied,
    ``Q Q^T = z z^T`` and :func:`uniqueness_check` passes, the verdict is
    upgraded to ``global-unique-ground-truth``.
    """
    thr = tol * _scale(A)
    gres, hmin = criticality_residuals(A, Q, tol=0.1 * thr, seed=seed)
    S = dual_matrix(A, Q)
    smin = extreme_eigenpair(S, "smallest", tol=0.1 * thr, seed=seed + 1).value
    rank = numerical_rank(Q)
    soc = gres <= thr and hmin >= -thr
    unique = None
    if soc and rank == 1:
        verdict = RANK_DEFICIENT_GLOBAL
        if z is not None:
            from .recover import frobenius_gap

            unique = uniqueness_check(A, z, tol=tol, seed=seed)
            if unique and frobenius_gap(Q, z) <= 1e-6 * A.n:
                verdict = GLOBAL_UNIQUE_GROUND_TRUTH
    elif soc:
        verdict = SECOND_ORDER_CRITICAL
    else:
        verdict = INCONCLUSIVE
    return CertificateReport(gres, hmin, smin, rank, verdict, thr, unique)


def uniqueness_check(A: SymOp, z: np.ndarray, tol: float = DEFAULT_TOL, seed: int = 0) -> bool:
    """True iff ``S(z) z = 0``, ``S(z) >= 0`` and ``S(z)`` has rank ``n - 1``.

    Then ``z z^T`` is the unique SDP optimum (strict complementarity).
    Tolerances are relative to ``n * ||A||`` like :func:`dual_certificate`.
    """
    z = np.asarray(z, dtype=float)
    if not np.all(np.abs(z) == 1.0):
        raise ValueError("z must be a sign vector")
    thr = tol * _scale(A)
    S = dual_matrix(A, z[:, None])
    if np.linalg.norm(S.matvec(z)) > thr:
        return False
    if A.n == 1:
        return True
    lo = extreme_eigenpair(S, "smallest", tol=0.1 * thr, seed=seed).value
    if lo < -thr:
        return False
    # lift z out of the spectrum; smallest remaining eigenvalue is the second of S
    mu = 2.0 * _scale(A) / A.n + 1.0
    second = extreme_eigenpair(_Deflated(S, z, mu), "smallest", tol=0.1 * thr, seed=seed + 1).value
    return second > thr


@dataclass(frozen=True)
class SdpEstimate:
    lower: float
    upper: float
    rank: int
    point: np.ndarray
    s_min_eig: float
    norm_bound: float


def sdp_value_estimate(M: SymOp, cfg: SolverConfig | None = None, init: np.ndarray | None = None,
                       tol: float = DEFAULT_TOL, p_max: int | None = None) -> SdpEstimate:
    """Bracket ``SDP(M) = max <M, X>`` over ``X >= 0, diag(X) = 1``.

    A rank-p staircase starts at ``p = 2`` (or from ``init``); while
    ``S(Q)`` is not certified PSD, the rank grows by one and the solve
    restarts from ``[Q, 0]`` nudged along the offending eigenvector, capped at
    ``ceil(sqrt(2n)) + 1``. ``lower`` is the best cost found; ``upper`` is
    ``min(n ||M||, cost + n max(0, -lambda_min(S)))``.
    """
    n = M.n
    cfg = cfg or SolverConfig()
    cap = min(n, p_max if p_max is not None else math.ceil(math.sqrt(2 * n)) + 1)
    cap = max(cap, 2)
    nb = n * spectral_norm(M, tol=max(1e-12, 1e-10 * _scale(M) / n))
    thr = tol * _scale(M)
    Q = init
    p = 2 if init is None else init.shape[1]
    best_lower, best_upper, best_Q, last_smin = -math.inf, nb, None, math.nan
    if init is not None:
        # the warm start is feasible too; rounding in later steps must not undercut it
        best_lower, best_Q = cf.cost(M, init), np.array(init, dtype=float)
    while True:
        rep = solve_rankp(M, p, cfg, init=Q)
        Q = rep.point
        S = dual_matrix(M, Q)
        eig = extreme_eigenpair(S, "smallest", tol=0.1 * thr, seed=cfg.seed + p)
        last_smin = eig.value
        if rep.cost > best_lower:
            best_lower, best_Q = rep.cost, Q
        best_upper = min(best_upper, rep.cost + n * max(0.0, -eig.value))
        if eig.value >= -thr or p >= cap:
            break
        Q = _lift(M, Q, eig.vector)
        p += 1
    # both are valid bounds; the clamp only absorbs eigensolver rounding
    upper = max(best_upper, best_lower)
    return SdpEstimate(best_lower, upper, best_Q.shape[1], best_Q, last_smin, nb)


def _lift(M: SymOp, Q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """``[Q, 0]`` moved along ``[0, v]``, a second-order ascent direction when ``v^T S v < 0``."""
    n, p = Q.shape
    base = np.hstack([Q, np.zeros((n, 1))])
    f0 = cf.cost(M, base)
    t = 1.0
    for _ in range(60):
        cand = base.copy()
        cand[:, -1] = t * v
        cand = cf.normalize_rows(cand)
        if cf.cost(M, cand) > f0:
            return cand
        t *= 0.5
    cand = base.copy()
    cand[:, -1] = 1e-3 * v
    return cf.normalize_rows(cand)


def sdp_bounds_dict(est: SdpEstimate) -> dict:
    return {"lower": est.lower, "upper": est.upper, "rank": est.rank,
            "s_min_eig": est.s_min_eig, "norm_bound": est.norm_bound}


def with_seed(cfg: SolverConfig | None, seed: int) -> SolverConfig:
    return replace(cfg or SolverConfig(), seed=seed)
