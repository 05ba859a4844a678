"""Random instances: Gaussian Z2 synchronization and the two-community SBM."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .specmat import (CenteredAdjacencyOp, SparseLowRankOp, SpikeNoiseOp, SymOp,
                      save_coo, spectral_norm)


@dataclass(frozen=True, eq=False)
class Z2Instance:
    z: np.ndarray
    Y: SpikeNoiseOp
    sigma: float
    lam: float
    seed: int | None = None

    @property
    def n(self) -> int:
        return self.z.size

    @property
    def W(self):
        return self.Y.Delta

    def params(self) -> dict:
        return {"model": "z2", "n": self.n, "sigma": self.sigma,
                "lambda": None if math.isinf(self.lam) else self.lam, "seed": self.seed}


@dataclass(frozen=True, eq=False)
class SbmInstance:
    g: np.ndarray
    A: sp.csr_matrix
    p: float
    q: float
    seed: int | None = None
    Anat: CenteredAdjacencyOp = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "Anat", CenteredAdjacencyOp(self.A, 0.5 * (self.p + self.q)))

    @property
    def n(self) -> int:
        return self.g.size

    @property
    def a(self) -> float:
        return self.p * self.n

    @property
    def b(self) -> float:
        return self.q * self.n

    @property
    def lambda_ab(self) -> float:
        return lambda_params(self.p, self.q, self.n)[0]

    def params(self) -> dict:
        return {"model": "sbm", "n": self.n, "p": self.p, "q": self.q, "a": self.a,
                "b": self.b, "lambda_ab": self.lambda_ab, "seed": self.seed}


@dataclass(frozen=True)
class NoiseSummary:
    spec_norm: float
    inf_norm_signal: float
    gamma_hat: float
    c: float
    sdp_over_n: float | None = None


def _rng(rng):
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


def _seed_of(rng):
    return rng if isinstance(rng, (int, np.integer)) else None


def wigner_offdiag(n: int, rng) -> np.ndarray:
    """Symmetric standard Gaussian matrix with zero diagonal."""
    rng = _rng(rng)
    W = np.triu(rng.standard_normal((n, n)), k=1)
    return W + W.T


def gen_z2(n: int, sigma: float | None = None, lam: float | None = None, rng=None) -> Z2Instance:
    """Sample ``Y = z z^T + sigma W``; give exactly one of ``sigma`` or ``lam = sqrt(n)/sigma``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if (sigma is None) == (lam is None):
        raise ValueError("give exactly one of sigma or lam")
    if sigma is not None:
        if sigma < 0:
            raise ValueError("sigma must be >= 0")
        lam = math.inf if sigma == 0 else math.sqrt(n) / sigma
    else:
        if not lam > 0:
            raise ValueError("lam must be > 0")
        sigma = 0.0 if math.isinf(lam) else math.sqrt(n) / lam
    seed = _seed_of(rng)
    rng = _rng(rng)
    z = rng.choice(np.array([-1.0, 1.0]), size=n)
    W = wigner_offdiag(n, rng)
    return Z2Instance(z=z, Y=SpikeNoiseOp(z, W, sigma), sigma=float(sigma), lam=float(lam), seed=seed)


def balanced_labels(n: int, rng) -> np.ndarray:
    if n % 2:
        raise ValueError("n must be even for balanced communities")
    g = np.ones(n)
    g[n // 2:] = -1.0
    return _rng(rng).permutation(g)


def gen_sbm(n: int, a: float | None = None, b: float | None = None,
            p: float | None = None, q: float | None = None, rng=None) -> SbmInstance:
    """Sample G(n, p, q) with balanced labels; ``(a, b)`` means ``p = a/n, q = b/n``.

    Diagonal entries are Bernoulli(p) like any same-community pair.
    """
    if n % 2:
        raise ValueError("n must be even")
    if (a is None) != (b is None) or (p is None) != (q is None) or (a is None) == (p is None):
        raise ValueError("give either (a, b) or (p, q)")
    if a is not None:
        p, q = a / n, b / n
    if not (0.0 <= q < p <= 1.0):
        raise ValueError(f"need 0 <= q < p <= 1, got p={p}, q={q}")
    seed = _seed_of(rng)
    rng = _rng(rng)
    g = balanced_labels(n, rng)
    # upper triangle incl. diagonal, row by row: O(n^2) uniforms, desk-scale only
    rows, cols = [], []
    for i in range(n):
        prob = np.where(g[i:] == g[i], p, q)
        hits = np.flatnonzero(rng.random(n - i) < prob)
        rows.append(np.full(hits.size, i))
        cols.append(hits + i)
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    U = sp.coo_matrix((np.ones(r.size), (r, c)), shape=(n, n)).tocsr()
    A = (U + sp.triu(U, k=1).T).tocsr()
    return SbmInstance(g=g, A=A, p=float(p), q=float(q), seed=seed)


def lambda_params(p: float, q: float, n: int) -> tuple[float, float]:
    """``(lambda(a, b), lambda_tilde(p, q))`` with ``a = p n``, ``b = q n``."""
    if not p > q >= 0:
        raise ValueError("need p > q >= 0")
    a, b = p * n, q * n
    lam_ab = (a - b) / math.sqrt(2.0 * (a + b))
    lam_tilde = (p - q) / math.sqrt(2.0 * (p + q)) * math.sqrt(n)
    return lam_ab, lam_tilde


def lambda_ab(a: float, b: float) -> float:
    if a + b <= 0:
        raise ValueError("a + b must be positive")
    return (a - b) / math.sqrt(2.0 * (a + b))


def noise_decomposition(inst: SbmInstance) -> tuple[SparseLowRankOp, np.ndarray, float]:
    """Split ``A_nat / scale = (lambda/n) g g^T + E + D``.

    ``scale = sqrt((p + q) n / 2)``. ``E`` is zero-diagonal with off-diagonal
    entries ``(A_ij - p)/scale`` within a community and ``(A_ij - q)/scale``
    across; ``D`` (returned as its diagonal) collects ``(A_ii - p)/scale``.
    """
    n, p, q = inst.n, inst.p, inst.q
    scale = math.sqrt(0.5 * (p + q) * n)
    off = inst.A - sp.diags(inst.A.diagonal())
    S = (off + p * sp.identity(n, format="csr")) / scale
    U = np.column_stack([np.ones(n), inst.g])
    w = np.array([-(p + q) / 2.0, -(p - q) / 2.0]) / scale
    E = SparseLowRankOp(S.tocsr(), U, w)
    D = (inst.A.diagonal() - p) / scale
    return E, D, scale


# ---------------------------------------------------------------------------
# noise statistics and tail checks


def summarize_noise(Delta: SymOp, signal: np.ndarray, c: float = 0.0,
                    sdp_over_n: float | None = None, tol: float = 1e-8) -> NoiseSummary:
    """Spectral and signal-direction norms of a noise operator plus ``gamma_hat``."""
    n = Delta.n
    s = spectral_norm(Delta, tol=tol)
    inf = float(np.abs(Delta.matvec(signal)).max())
    gamma = max(s / math.sqrt(n), inf / math.sqrt(n * math.log(n)) if n > 1 else 0.0)
    return NoiseSummary(spec_norm=s, inf_norm_signal=inf, gamma_hat=gamma, c=c, sdp_over_n=sdp_over_n)


@dataclass(frozen=True)
class WignerTailRow:
    t: float
    trials: int
    spec_freq: float
    spec_bound: float
    inf_freq: float
    inf_freq_normalized: float
    inf_bound: float


def tail_check_wigner(n: int, trials: int, t_values, rng=None) -> list[WignerTailRow]:
    """Empirical exceedance frequencies for the two Wigner tail events.

    ``spec_freq`` counts ``||W|| >= 2 sqrt(n) + t`` against ``exp(-t^2/4)``.
    ``inf_freq`` counts ``||W z||_inf >= sqrt(2 log n + t)`` exactly as that
    threshold is usually printed; ``inf_freq_normalized`` divides ``W z`` by
    its entry standard deviation ``sqrt(n - 1)`` first. Both are compared to
    ``exp(-t/2)``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = _rng(rng)
    ts = np.asarray(list(t_values), dtype=float)
    specs = np.empty(trials)
    infs = np.empty(trials)
    for k in range(trials):
        W = wigner_offdiag(n, rng)
        z = rng.choice(np.array([-1.0, 1.0]), size=n)
        specs[k] = float(np.abs(np.linalg.eigvalsh(W)[[0, -1]]).max())
        infs[k] = float(np.abs(W @ z).max())
    rows = []
    for t in ts:
        thr = math.sqrt(2.0 * math.log(n) + t)
        rows.append(WignerTailRow(
            t=float(t), trials=trials,
            spec_freq=float(np.mean(specs >= 2.0 * math.sqrt(n) + t)),
            spec_bound=math.exp(-t * t / 4.0),
            inf_freq=float(np.mean(infs >= thr)),
            inf_freq_normalized=float(np.mean(infs / math.sqrt(max(n - 1, 1)) >= thr)),
            inf_bound=math.exp(-t / 2.0),
        ))
    return rows


@dataclass(frozen=True)
class SbmTailRow:
    trial: int
    spec_norm: float
    inf_norm: float
    sdp_over_n_lower: float | None
    sdp_over_n_upper: float | None
    error: str | None = None


@dataclass(frozen=True)
class SbmTailTable:
    n: int
    a: float
    b: float
    d: float
    rows: list
    # constants that make the median fit each lemma shape exactly; reported, not asserted
    fitted_C_spec: float
    fitted_C_inf: float
    fitted_C_sdp: float | None


def tail_check_sbm(n: int, a: float, b: float, trials: int, rng=None, with_sdp: bool = False,
                   solver_cfg=None) -> SbmTailTable:
    """Per-trial ``||E||``, ``||E g||_inf`` and optionally ``SDP(E)/n`` brackets."""
    from .certify import sdp_value_estimate  # certify depends on solver, not on models

    rng = _rng(rng)
    d = 0.5 * (a + b)
    rows = []
    for k in range(trials):
        inst = gen_sbm(n, a=a, b=b, rng=rng)
        E, _, _ = noise_decomposition(inst)
        s = spectral_norm(E, tol=1e-8)
        inf = float(np.abs(E.matvec(inst.g)).max())
        lo = hi = None
        err = None
        if with_sdp:
            try:
                est = sdp_value_estimate(E, solver_cfg)
                lo, hi = est.lower / n, est.upper / n
            except Exception as exc:  # recorded per trial, never aborts the table
                err = f"{type(exc).__name__}: {exc}"
        rows.append(SbmTailRow(k, s, inf, lo, hi, err))
    logn = math.log(n)
    med_s = float(np.median([r.spec_norm for r in rows]))
    med_i = float(np.median([r.inf_norm for r in rows]))
    C_spec = (med_s - 3.0) / math.sqrt(logn / d)
    C_inf = med_i / (math.sqrt(logn) + logn / math.sqrt(d))
    C_sdp = None
    sdp_hi = [r.sdp_over_n_upper for r in rows if r.sdp_over_n_upper is not None]
    if sdp_hi:
        C_sdp = (float(np.median(sdp_hi)) - 2.0) / (math.log(d) / d**0.1)
    return SbmTailTable(n, a, b, d, rows, C_spec, C_inf, C_sdp)


# ---------------------------------------------------------------------------
# serialization: coordinate matrix + JSON sidecar


def save_instance(inst, stem) -> tuple[Path, Path]:
    """Write ``<stem>.coo`` (observation, upper triangle) and ``<stem>.json``."""
    stem = Path(stem)
    mat_path, meta_path = stem.with_suffix(".coo"), stem.with_suffix(".json")
    if isinstance(inst, Z2Instance):
        save_coo(mat_path, inst.Y.to_dense())
        meta = inst.params() | {"labels": [int(x) for x in inst.z]}
    elif isinstance(inst, SbmInstance):
        save_coo(mat_path, inst.A)
        meta = inst.params() | {"labels": [int(x) for x in inst.g]}
    else:
        raise TypeError(f"cannot serialize {type(inst).__name__}")
    meta_path.write_text(json.dumps(meta, indent=2))
    return mat_path, meta_path


def load_instance(stem):
    """Inverse of :func:`save_instance`. Z2 noise is recovered as ``(Y - z z^T)/sigma``."""
    from .specmat import load_coo

    stem = Path(stem)
    meta = json.loads(stem.with_suffix(".json").read_text())
    M = load_coo(stem.with_suffix(".coo"))
    labels = np.asarray(meta["labels"], dtype=float)
    if meta["model"] == "z2":
        sigma = float(meta["sigma"])
        dense = M.toarray()
        W = (dense - np.outer(labels, labels)) / sigma if sigma > 0 else np.zeros_like(dense)
        lam = math.inf if meta["lambda"] is None else float(meta["lambda"])
        return Z2Instance(labels, SpikeNoiseOp(labels, W, sigma), sigma, lam, meta.get("seed"))
    if meta["model"] == "sbm":
        return SbmInstance(labels, M.tocsr(), float(meta["p"]), float(meta["q"]), meta.get("seed"))
    raise ValueError(f"unknown model {meta['model']!r}")
