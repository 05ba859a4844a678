"""Riemannian trust-region solver for ``max Tr(Q^T A Q)`` over unit-row ``Q``.

The rank-2 solver works in angle coordinates (one scalar per row), where the
model Hessian is exactly ``2 H(Q)``. The rank-p solver works on the oblique
manifold in ambient coordinates. Both run truncated CG (Steihaug-Toint) on
the trust-region subproblem and, once the gradient is small, check the
smallest eigenvalue of the Hessian and take an escape step along a
negative-curvature direction when needed.
"""
from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace

import numpy as np

from . import circlefold as cf
from .specmat import EigenNonConvergence, SymOp, extreme_eigenpair

CONVERGED = "converged"
ITERATION_LIMIT = "iteration-limit"
STAGNATED = "stagnated"


@dataclass(frozen=True)
class SolverConfig:
    """Solver settings. ``None`` tolerances scale with ``n`` at solve time.

    grad_tol bounds ``||(ddiag(AQQ^T) - A) Q||_F``; hess_tol bounds
    ``-lambda_min(H(Q))``.
    """

    grad_tol: float | None = None
    hess_tol: float | None = None
    max_outer: int = 1000
    tcg_max: int | None = None
    trust_init: float | None = None
    trust_max: float | None = None
    seed: int = 0
    rho_accept: float = 0.1
    kappa: float = 0.1
    theta: float = 1.0
    max_stalls: int = 30

    def __post_init__(self):
        for name in ("grad_tol", "hess_tol", "trust_init", "trust_max"):
            val = getattr(self, name)
            if val is not None and not val > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_outer < 1:
            raise ValueError("max_outer must be >= 1")

    def resolved(self, n: int, dim: int | None = None) -> "SolverConfig":
        dim = n if dim is None else dim
        tmax = self.trust_max if self.trust_max is not None else np.pi * np.sqrt(dim)
        return replace(
            self,
            grad_tol=self.grad_tol if self.grad_tol is not None else 1e-8 * n,
            hess_tol=self.hess_tol if self.hess_tol is not None else 1e-6 * n,
            tcg_max=self.tcg_max if self.tcg_max is not None else 4 * dim,
            trust_max=tmax,
            trust_init=self.trust_init if self.trust_init is not None else tmax / 8.0,
        )


@dataclass
class SolveReport:
    point: np.ndarray
    cost: float
    grad_residual: float
    hess_min_eig: float
    outer_iters: int
    matvecs: int
    status: str
    escapes: int = 0
    inner_iters: int = 0
    grad_tol: float = float("nan")
    hess_tol: float = float("nan")
    seed: int = 0
    trial: int = 0

    @property
    def converged(self) -> bool:
        return self.status == CONVERGED

    @property
    def rank(self) -> int:
        return self.point.shape[1]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["point"] = cf.format_point(self.point)
        return d

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "SolveReport":
        d = dict(d)
        d["point"] = np.asarray(d["point"], dtype=float)
        return cls(**d)


def _tcg(hvp, grad, radius, max_iter, kappa, theta):
    """Steihaug-Toint CG for ``min <g, e> + 1/2 <e, B e>``, ``||e|| <= radius``.

    Returns the step, ``B @ step``, iteration count and whether the boundary
    (or negative curvature) stopped the iteration.
    """
    eta = np.zeros_like(grad)
    Beta = np.zeros_like(grad)
    r = grad.copy()
    rr = float(np.vdot(r, r))
    r0 = np.sqrt(rr)
    delta = -r
    e_e, e_d, d_d = 0.0, 0.0, rr
    for j in range(1, max_iter + 1):
        Bd = hvp(delta)
        dBd = float(np.vdot(delta, Bd))
        alpha = rr / dBd if dBd > 0 else np.inf
        new_e_e = e_e + 2.0 * alpha * e_d + alpha * alpha * d_d
        if dBd <= 0 or new_e_e >= radius * radius:
            tau = (-e_d + np.sqrt(e_d * e_d + d_d * (radius * radius - e_e))) / d_d
            return eta + tau * delta, Beta + tau * Bd, j, True
        eta = eta + alpha * delta
        Beta = Beta + alpha * Bd
        e_e = new_e_e
        r = r + alpha * Bd
        rr_new = float(np.vdot(r, r))
        if np.sqrt(rr_new) <= r0 * min(r0**theta, kappa):
            return eta, Beta, j, False
        beta = rr_new / rr
        rr = rr_new
        delta = -r + beta * delta
        e_d = beta * (e_d + alpha * d_d)
        d_d = rr + beta * beta * d_d
    return eta, Beta, max_iter, False


class _CountedOp(SymOp):
    """Wraps an operator and counts applied columns."""

    def __init__(self, A: SymOp):
        self.A = A
        self.n = A.n
        self.count = 0

    def _apply(self, v):
        self.count += 1 if v.ndim == 1 else v.shape[1]
        return self.A.matmat(v)

    def diagonal(self):
        return self.A.diagonal()

    def to_dense(self):
        return self.A.to_dense()


def _check_cost(f: float) -> float:
    if not np.isfinite(f):
        raise ValueError("cost is not finite; the cost matrix is malformed")
    return f


def _gain(Q, AQ, Q_new, AQ_new):
    """``f(Q_new) - f(Q)`` as ``<Q_new - Q, A(Q_new + Q)>``, free of cancellation."""
    return float(np.sum((Q_new - Q) * (AQ_new + AQ)))


def _noise(f):
    # gains below this are indistinguishable from rounding in the cost
    return max(1.0, abs(f)) * np.finfo(float).eps * 1e3


def _rho(f_old, gain, model_gain):
    reg = _noise(f_old)
    return (gain + reg) / (model_gain + reg)


def solve_rank2(A: SymOp, cfg: SolverConfig | None = None, init: np.ndarray | None = None,
                callback=None) -> SolveReport:
    """Approximate second-order critical point of the rank-2 program.

    Starting from ``init`` (or a random point drawn from ``cfg.seed``), runs
    trust-region iterations on the angle coordinates; after first-order
    convergence, the smallest eigenpair of ``H(Q)`` decides between stopping
    and an escape step along the eigenvector. ``callback(k, cost)`` fires
    after every accepted step or escape.
    """
    cfg = (cfg or SolverConfig()).resolved(A.n)
    n = A.n
    if init is None:
        Q = cf.random_point(n, cfg.seed)
    else:
        Q = np.array(init, dtype=float)
        if Q.shape != (n, 2):
            raise ValueError(f"init must have shape ({n}, 2), got {Q.shape}")
        cf.check_unit_rows(Q, atol=1e-10)
        Q = cf.normalize_rows(Q)

    Aop = _CountedOp(A)
    AQ = Aop.matmat(Q)
    f = _check_cost(float(np.sum(Q * AQ)))
    radius = cfg.trust_init
    status = ITERATION_LIMIT
    escapes = inner_total = stalls = 0
    hess_min = float("nan")
    eig_seed = cfg.seed
    k = 0
    while k < cfg.max_outer:
        k += 1
        alpha = cf.rgrad(Aop, Q, AQ)
        gres = 0.5 * float(np.linalg.norm(alpha))
        if gres <= cfg.grad_tol or stalls >= cfg.max_stalls:
            H = cf.HessOp(Aop, Q, AQ)
            eig = _min_eig(H, cfg.hess_tol, eig_seed)
            hess_min = eig.value
            if hess_min >= -cfg.hess_tol:
                status = CONVERGED if gres <= cfg.grad_tol else STAGNATED
                break
            step = _escape_rank2(Aop, Q, f, eig.vector, eig.value, alpha)
            if step is None:
                status = STAGNATED
                break
            Q, AQ, f = step
            escapes += 1
            if callback is not None:
                callback(k, f)
            stalls = 0
            radius = max(radius, cfg.trust_init)
            continue
        H = cf.HessOp(Aop, Q, AQ)
        eta, Beta, inner, hit = _tcg(lambda v: 2.0 * H.matvec(v), -alpha, radius,
                                     cfg.tcg_max, cfg.kappa, cfg.theta)
        inner_total += inner
        model_gain = float(alpha @ eta - 0.5 * eta @ Beta)
        Q_new = cf.retract(Q, eta)
        AQ_new = Aop.matmat(Q_new)
        f_new = _check_cost(float(np.sum(Q_new * AQ_new)))
        gain = _gain(Q, AQ, Q_new, AQ_new)
        rho = _rho(f, gain, model_gain)
        if rho < 0.25:
            radius /= 4.0
        elif rho > 0.75 and hit:
            radius = min(2.0 * radius, cfg.trust_max)
        if rho > cfg.rho_accept and gain >= -_noise(f):
            Q, AQ, f = Q_new, AQ_new, f_new
            stalls = 0
            if callback is not None:
                callback(k, f)
        else:
            stalls += 1
    alpha = cf.rgrad(Aop, Q, AQ)
    gres = 0.5 * float(np.linalg.norm(alpha))
    if status == ITERATION_LIMIT:
        try:
            hess_min = _min_eig(cf.HessOp(Aop, Q, AQ), cfg.hess_tol, eig_seed).value
        except EigenNonConvergence:
            hess_min = float("nan")
    return SolveReport(point=Q, cost=f, grad_residual=gres, hess_min_eig=hess_min,
                       outer_iters=k, matvecs=Aop.count, status=status,
                       escapes=escapes, inner_iters=inner_total,
                       grad_tol=cfg.grad_tol, hess_tol=cfg.hess_tol, seed=cfg.seed)


def _min_eig(H: SymOp, hess_tol: float, seed: int):
    return extreme_eigenpair(H, "smallest", tol=0.1 * hess_tol, seed=seed)


def _escape_rank2(A, Q, f, v, lam, alpha):
    """Line search along an eigenvector of ``H`` with eigenvalue ``lam < 0``."""
    v = v if float(alpha @ v) >= 0 else -v
    t = 1.0
    for _ in range(60):
        Q_new = cf.retract(Q, v, t)
        AQ_new = A.matmat(Q_new)
        f_new = float(np.sum(Q_new * AQ_new))
        if f_new > f + 0.25 * (-lam) * t * t:
            return Q_new, AQ_new, f_new
        t *= 0.5
    return None


# ---------------------------------------------------------------------------
# rank p


class TangentHessOp(SymOp):
    """``ddiag(AQQ^T) - A`` compressed to the oblique tangent space.

    Acts on flattened ambient ``n x p`` arrays; the normal directions are
    shifted to ``shift`` so they never compete for the smallest eigenvalue.
    """

    def __init__(self, A: SymOp, Q: np.ndarray, d: np.ndarray, shift: float):
        self.A, self.Q, self.d, self.shift = A, Q, d, shift
        self.shape = Q.shape
        self.n = Q.size

    def _apply(self, v):
        cols = 1 if v.ndim == 1 else v.shape[1]
        out = np.empty((self.n, cols))
        V = v.reshape(self.n, cols)
        for c in range(cols):
            U = V[:, c].reshape(self.shape)
            Ut = cf.oblique_project(self.Q, U)
            T = self.d[:, None] * Ut - cf.oblique_project(self.Q, self.A.matmat(Ut))
            out[:, c] = (T + self.shift * (U - Ut)).ravel()
        return out.reshape(v.shape)

    def diagonal(self):
        return np.diag(self.to_dense())


def solve_rankp(A: SymOp, p: int, cfg: SolverConfig | None = None,
                init: np.ndarray | None = None, callback=None) -> SolveReport:
    """Rank-p analogue of :func:`solve_rank2` on the oblique manifold.

    With ``p == 2`` and no ``init`` this delegates to :func:`solve_rank2`, so
    both routes return the same point for the same seed.
    """
    n = A.n
    if not 2 <= p <= n:
        raise ValueError(f"need 2 <= p <= n, got p={p}, n={n}")
    if p == 2 and init is None:
        return solve_rank2(A, cfg, callback=callback)
    cfg = (cfg or SolverConfig()).resolved(n, dim=n * (p - 1))
    if init is None:
        Q = cf.random_oblique_point(n, p, cfg.seed)
    else:
        Q = np.array(init, dtype=float)
        if Q.shape != (n, p):
            raise ValueError(f"init must have shape ({n}, {p}), got {Q.shape}")
        cf.check_unit_rows(Q, atol=1e-10)
        Q = cf.normalize_rows(Q)
    Aop = _CountedOp(A)
    AQ = Aop.matmat(Q)
    f = _check_cost(float(np.sum(Q * AQ)))
    radius = cfg.trust_init
    status = ITERATION_LIMIT
    escapes = inner_total = stalls = 0
    hess_min = float("nan")
    shift = None
    k = 0
    while k < cfg.max_outer:
        k += 1
        d = cf.row_inner(AQ, Q)
        G = 2.0 * cf.oblique_project(Q, AQ)
        gres = 0.5 * float(np.linalg.norm(G))
        if gres <= cfg.grad_tol or stalls >= cfg.max_stalls:
            if shift is None:
                shift = 2.0 * float(np.abs(d).max()) + float(np.linalg.norm(AQ)) + 1.0
            eig = extreme_eigenpair(TangentHessOp(Aop, Q, d, shift), "smallest",
                                    tol=0.1 * cfg.hess_tol, seed=cfg.seed)
            hess_min = eig.value
            if hess_min >= -cfg.hess_tol:
                status = CONVERGED if gres <= cfg.grad_tol else STAGNATED
                break
            U = cf.oblique_project(Q, eig.vector.reshape(Q.shape))
            U /= np.linalg.norm(U)
            if np.sum(G * U) < 0:
                U = -U
            step = _escape_oblique(Aop, Q, f, U, hess_min)
            if step is None:
                status = STAGNATED
                break
            Q, AQ, f = step
            escapes += 1
            if callback is not None:
                callback(k, f)
            stalls = 0
            radius = max(radius, cfg.trust_init)
            continue

        def hvp(U):
            return -cf.oblique_hess(Aop, Q, U, d)

        eta, Beta, inner, hit = _tcg(hvp, -G, radius, cfg.tcg_max, cfg.kappa, cfg.theta)
        inner_total += inner
        model_gain = float(np.sum(G * eta) - 0.5 * np.sum(eta * Beta))
        Q_new = cf.oblique_retract(Q, eta)
        AQ_new = Aop.matmat(Q_new)
        f_new = _check_cost(float(np.sum(Q_new * AQ_new)))
        gain = _gain(Q, AQ, Q_new, AQ_new)
        rho = _rho(f, gain, model_gain)
        if rho < 0.25:
            radius /= 4.0
        elif rho > 0.75 and hit:
            radius = min(2.0 * radius, cfg.trust_max)
        if rho > cfg.rho_accept and gain >= -_noise(f):
            Q, AQ, f = Q_new, AQ_new, f_new
            stalls = 0
            if callback is not None:
                callback(k, f)
        else:
            stalls += 1
    gres = 0.5 * float(np.linalg.norm(2.0 * cf.oblique_project(Q, AQ)))
    return SolveReport(point=Q, cost=f, grad_residual=gres, hess_min_eig=hess_min,
                       outer_iters=k, matvecs=Aop.count, status=status,
                       escapes=escapes, inner_iters=inner_total,
                       grad_tol=cfg.grad_tol, hess_tol=cfg.hess_tol, seed=cfg.seed)


def _escape_oblique(A, Q, f, U, lam):
    t = 1.0
    for _ in range(60):
        Q_new = cf.oblique_retract(Q, t * U)
        AQ_new = A.matmat(Q_new)
        f_new = float(np.sum(Q_new * AQ_new))
        if f_new > f + 0.25 * (-lam) * t * t:
            return Q_new, AQ_new, f_new
        t *= 0.5
    return None


# ---------------------------------------------------------------------------
# multistart


def _one_trial(args):
    A, cfg, trial = args
    rep = solve_rank2(A, replace(cfg, seed=cfg.seed ^ trial))
    rep.trial = trial
    return rep


def multistart(A: SymOp, k: int, cfg: SolverConfig | None = None, workers: int = 1) -> list[SolveReport]:
    """``k`` independent rank-2 solves seeded ``cfg.seed ^ trial``.

    Reports come back sorted by cost, highest first; equal costs keep trial
    order.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    cfg = cfg or SolverConfig()
    jobs = [(A, cfg, t) for t in range(k)]
    if workers <= 1:
        reports = [_one_trial(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(_one_trial, jobs))
    return sorted(reports, key=lambda r: (-r.cost, r.trial))
