"""Experiment configuration, seeded sweeps and result persistence."""
from __future__ import annotations

import csv
import dataclasses
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .certify import INCONCLUSIVE, dual_certificate, uniqueness_check
from .models import gen_sbm, gen_z2, lambda_params, noise_decomposition, summarize_noise
from .recover import correlation, frobenius_gap, overlap, round_gaussian
from .solver import CONVERGED, SolverConfig, solve_rank2

EXPERIMENTS = ("z2-sweep", "sbm-sweep", "exact-recovery", "tails", "oracle-audit", "solve-one")
WORKERS_ENV = "BMSYNC_WORKERS"
SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration


@dataclass
class ExperimentConfig:
    experiment: str = "z2-sweep"
    n: int = 200
    sigma: list = field(default_factory=list)
    lam: list = field(default_factory=list)
    a: list = field(default_factory=list)
    b: list = field(default_factory=list)
    trials: int = 1
    restarts: int = 1
    solver: SolverConfig = field(default_factory=SolverConfig)
    master_seed: int = 0
    output: str | None = None
    format: str = "csv"
    workers: int | None = None
    t_values: list = field(default_factory=lambda: [2.0, 4.0, 6.0])
    with_sdp: bool = False
    uniqueness: bool = False

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; pick one of {EXPERIMENTS}")
        if self.trials < 1 or self.restarts < 1:
            raise ConfigError("trials and restarts must be >= 1")
        if self.n < 1:
            raise ConfigError("n must be >= 1")
        if self.format not in ("csv", "json"):
            raise ConfigError("format must be csv or json")
        if self.experiment in ("z2-sweep", "exact-recovery", "solve-one"):
            if self.sigma and self.lam:
                raise ConfigError("give a sigma grid or a lambda grid, not both")
            if self.experiment != "solve-one" and not (self.sigma or self.lam):
                raise ConfigError("z2 sweeps need a non-empty sigma or lambda grid")
        if self.experiment == "sbm-sweep":
            if not self.a or len(self.a) != len(self.b):
                raise ConfigError("sbm-sweep needs equally long, non-empty a and b grids")
            if self.n % 2:
                raise ConfigError("sbm-sweep needs even n")
        if self.experiment == "tails" and not self.t_values:
            raise ConfigError("tails needs t_values")

    def grid(self) -> list[dict]:
        if self.experiment == "sbm-sweep":
            return [{"a": float(a), "b": float(b)} for a, b in zip(self.a, self.b)]
        if self.sigma:
            return [{"sigma": float(s)} for s in self.sigma]
        if self.lam:
            return [{"lam": float(v)} for v in self.lam]
        return [{"sigma": 0.0}]

    def resolved_workers(self) -> int:
        if self.workers is not None:
            return max(1, int(self.workers))
        env = os.environ.get(WORKERS_ENV)
        return max(1, int(env)) if env else 1

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["solver"] = dataclasses.asdict(self.solver)
        return d


_LIST_KEYS = {"sigma", "lam", "lambda", "a", "b", "t_values"}
_SOLVER_FIELDS = {f.name: f for f in dataclasses.fields(SolverConfig)}


def _parse_scalar(text: str):
    t = text.strip()
    low = t.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if low in ("none", "null", ""):
        return None
    try:
        return int(t)
    except ValueError:
        pass
    try:
        return float(t)
    except ValueError:
        return t


def apply_setting(values: dict, key: str, raw: str) -> None:
    key = key.strip()
    if key == "lambda":
        key = "lam"
    if key in _LIST_KEYS or key == "lam":
        values[key] = [float(x) for x in raw.replace(",", " ").split()]
    elif key.startswith("solver."):
        name = key.split(".", 1)[1]
        if name not in _SOLVER_FIELDS:
            raise ConfigError(f"unknown solver setting {name!r}")
        values.setdefault("solver", {})[name] = _parse_scalar(raw)
    else:
        values[key] = _parse_scalar(raw)


def parse_config_text(text: str, overrides: list[str] | None = None) -> ExperimentConfig:
    """Parse ``key = value`` lines (``#`` comments, dotted ``solver.*`` keys)."""
    values: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        k, v = line.split("=", 1)
        apply_setting(values, k, v)
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r}: expected key=value")
        k, v = item.split("=", 1)
        apply_setting(values, k, v)
    return config_from_dict(values)


def config_from_dict(values: dict) -> ExperimentConfig:
    values = dict(values)
    solver = values.pop("solver", {})
    if isinstance(solver, dict):
        solver = SolverConfig(**solver)
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        return ExperimentConfig(solver=solver, **values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path, overrides: list[str] | None = None) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text, overrides)


# ---------------------------------------------------------------------------
# seeds


def derive_seed(master_seed: int, *indices: int) -> int:
    """64-bit seed hashed from the master seed and a tuple of indices."""
    # the length prefix keeps (g, t) and (g, t, 0) apart: SeedSequence pads with zeros
    ss = np.random.SeedSequence([int(master_seed) & (2**64 - 1), len(indices), *[int(i) for i in indices]])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


# ---------------------------------------------------------------------------
# rows


@dataclass
class ResultRecord:
    experiment: str
    seed: int
    n: int
    grid_index: int
    trial: int
    restart: int
    instance_seed: int
    sigma: float | None
    lam: float | None
    a: float | None
    b: float | None
    status: str
    cost: float | None
    grad_residual: float | None
    hess_min_eig: float | None
    s_min_eig: float | None
    q_rank: int | None
    verdict: str | None
    correlation: float | None
    overlap: float | None
    exact: bool | None
    frobenius_gap: float | None
    gamma_hat: float | None
    unique: bool | None
    error: str | None
    wall_time: float


NONDETERMINISTIC_FIELDS = ("wall_time",)


def _z2_task(args):
    cfg, gi, point, trial = args
    n = cfg.n
    inst_seed = derive_seed(cfg.master_seed, gi, trial)
    sigma = point.get("sigma")
    lam = point.get("lam")
    rows = []
    try:
        inst = gen_z2(n, sigma=sigma, lam=lam, rng=inst_seed)
        A, truth = inst.Y, inst.z
        noise = summarize_noise(_noise_op(inst), truth)
        unique = uniqueness_check(A, truth) if cfg.uniqueness else None
        sig, lm = inst.sigma, (None if math.isinf(inst.lam) else inst.lam)
    except Exception as exc:
        return [_failed_row(cfg, gi, trial, r, inst_seed, point, exc) for r in range(cfg.restarts)]
    for r in range(cfg.restarts):
        rows.append(_solve_row(cfg, gi, trial, r, inst_seed, A, truth, noise.gamma_hat, unique,
                               sigma=sig, lam=lm))
    return rows


def _noise_op(inst):
    from .specmat import DenseOp

    return DenseOp(inst.W)


def _sbm_task(args):
    cfg, gi, point, trial = args
    inst_seed = derive_seed(cfg.master_seed, gi, trial)
    try:
        inst = gen_sbm(cfg.n, a=point["a"], b=point["b"], rng=inst_seed)
        E, _, _ = noise_decomposition(inst)
        gamma = summarize_noise(E, inst.g).gamma_hat
        unique = uniqueness_check(inst.Anat, inst.g) if cfg.uniqueness else None
        lam = lambda_params(inst.p, inst.q, inst.n)[0]
    except Exception as exc:
        return [_failed_row(cfg, gi, trial, r, inst_seed, point, exc) for r in range(cfg.restarts)]
    return [_solve_row(cfg, gi, trial, r, inst_seed, inst.Anat, inst.g, gamma, unique,
                       lam=lam, a=point["a"], b=point["b"]) for r in range(cfg.restarts)]


def _solve_row(cfg, gi, trial, restart, inst_seed, A, truth, gamma, unique,
               sigma=None, lam=None, a=None, b=None) -> ResultRecord:
    seed = derive_seed(cfg.master_seed, gi, trial, restart)
    t0 = time.perf_counter()
    try:
        rep = solve_rank2(A, dataclasses.replace(cfg.solver, seed=seed))
        cert = dual_certificate(A, rep.point, seed=seed & 0xFFFF)
        Q = rep.point
        gap = frobenius_gap(Q, truth)
        row = ResultRecord(
            experiment=cfg.experiment, seed=seed, n=A.n, grid_index=gi, trial=trial,
            restart=restart, instance_seed=inst_seed, sigma=sigma, lam=lam, a=a, b=b,
            status=rep.status, cost=rep.cost, grad_residual=cert.grad_residual,
            hess_min_eig=cert.hess_min_eig, s_min_eig=cert.s_min_eig, q_rank=cert.q_rank,
            verdict=cert.verdict, correlation=correlation(Q, truth),
            overlap=overlap(round_gaussian(Q, seed), truth), exact=bool(gap <= 1e-6 * A.n),
            frobenius_gap=gap, gamma_hat=gamma, unique=unique, error=None, wall_time=0.0)
    except Exception as exc:
        row = _failed_row(cfg, gi, trial, restart, inst_seed, {"sigma": sigma, "lam": lam, "a": a, "b": b}, exc)
        row.gamma_hat = gamma
    row.wall_time = time.perf_counter() - t0
    return row


def _failed_row(cfg, gi, trial, restart, inst_seed, point, exc) -> ResultRecord:
    return ResultRecord(
        experiment=cfg.experiment, seed=derive_seed(cfg.master_seed, gi, trial, restart), n=cfg.n,
        grid_index=gi, trial=trial, restart=restart, instance_seed=inst_seed,
        sigma=point.get("sigma"), lam=point.get("lam"), a=point.get("a"), b=point.get("b"),
        status="error", cost=None, grad_residual=None, hess_min_eig=None, s_min_eig=None,
        q_rank=None, verdict=None, correlation=None, overlap=None, exact=None,
        frobenius_gap=None, gamma_hat=None, unique=None,
        error=f"{type(exc).__name__}: {exc}", wall_time=0.0)


def run_sweep(cfg: ExperimentConfig, workers: int | None = None) -> list[ResultRecord]:
    """Generate, solve, certify and measure every (grid point, trial, restart).

    Rows come back ordered by ``(grid_index, trial, restart)`` whatever the
    worker count; failures become rows with ``status == "error"``.
    """
    cfg.validate()
    if cfg.experiment not in ("z2-sweep", "exact-recovery", "sbm-sweep", "solve-one"):
        raise ConfigError(f"run_sweep does not handle {cfg.experiment!r}; see run_tails / run_oracle_audit")
    if cfg.experiment == "exact-recovery" and not cfg.uniqueness:
        cfg = dataclasses.replace(cfg, uniqueness=True)
    task = _sbm_task if cfg.experiment == "sbm-sweep" else _z2_task
    trials = 1 if cfg.experiment == "solve-one" else cfg.trials
    jobs = [(cfg, gi, point, t) for gi, point in enumerate(cfg.grid()) for t in range(trials)]
    workers = workers if workers is not None else cfg.resolved_workers()
    if workers <= 1:
        chunks = [task(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(task, jobs))
    rows = [r for chunk in chunks for r in chunk]
    rows.sort(key=lambda r: (r.grid_index, r.trial, r.restart))
    expected = len(jobs) * cfg.restarts
    if len(rows) != expected:
        raise RuntimeError(f"sweep produced {len(rows)} rows, expected {expected}")
    return rows


def aggregate(rows: list[ResultRecord]) -> list[dict]:
    """Per grid point: min/median correlation, exact-recovery and certificate rates."""
    out = []
    for gi in sorted({r.grid_index for r in rows}):
        sub = [r for r in rows if r.grid_index == gi]
        ok = [r for r in sub if r.status != "error"]
        cors = np.array([r.correlation for r in ok], dtype=float)
        out.append({
            "grid_index": gi, "sigma": sub[0].sigma, "lam": sub[0].lam, "a": sub[0].a, "b": sub[0].b,
            "rows": len(sub), "errors": len(sub) - len(ok),
            "min_correlation": float(cors.min()) if cors.size else None,
            "median_correlation": float(np.median(cors)) if cors.size else None,
            "exact_rate": float(np.mean([bool(r.exact) for r in ok])) if ok else None,
            "certified_rate": float(np.mean([r.verdict not in (None, INCONCLUSIVE) for r in ok])) if ok else None,
            "converged_rate": float(np.mean([r.status == CONVERGED for r in ok])) if ok else None,
            "unique_rate": (float(np.mean([bool(r.unique) for r in ok]))
                            if ok and ok[0].unique is not None else None),
        })
    return out


# ---------------------------------------------------------------------------
# tails and oracle audit


@dataclass
class TailRecord:
    experiment: str
    seed: int
    n: int
    t: float
    trials: int
    spec_freq: float
    spec_bound: float
    inf_freq: float
    inf_freq_normalized: float
    inf_bound: float


def run_tails(cfg: ExperimentConfig) -> list[TailRecord]:
    from .models import tail_check_wigner

    seed = derive_seed(cfg.master_seed, 0)
    table = tail_check_wigner(cfg.n, cfg.trials, cfg.t_values, rng=seed)
    return [TailRecord("tails", seed, cfg.n, r.t, r.trials, r.spec_freq, r.spec_bound,
                       r.inf_freq, r.inf_freq_normalized, r.inf_bound) for r in table]


@dataclass
class OracleRecord:
    experiment: str
    seed: int
    n: int
    instance: int
    sigma: float
    mle_value: float
    n_soc_points: int
    counterexamples: int
    solver_cost: float
    verdict: str
    sdp_upper: float
    norm_bound: float


AUDIT_SIGMAS = (0.5, 1.0, 1.5, 2.0, 2.5)


def oracle_instance(cfg: ExperimentConfig, k: int):
    """Audit instance ``k``: a Z2 observation at ``n`` with ``sigma`` cycling over the grid."""
    sigmas = cfg.sigma or AUDIT_SIGMAS
    seed = derive_seed(cfg.master_seed, k)
    return seed, gen_z2(cfg.n, sigma=float(sigmas[k % len(sigmas)]), rng=seed)


def _oracle_task(args):
    from .certify import sdp_value_estimate
    from .oracle import audit_rank_one_optimality, mle_bruteforce

    cfg, k = args
    seed, inst = oracle_instance(cfg, k)
    M = inst.Y
    n_soc, bad = audit_rank_one_optimality(M)
    best = mle_bruteforce(M).best_value
    scfg = dataclasses.replace(cfg.solver, seed=seed)
    rep = solve_rank2(M, scfg)
    verdict = dual_certificate(M, rep.point).verdict
    est = sdp_value_estimate(M, scfg, init=rep.point)
    return OracleRecord("oracle-audit", seed, cfg.n, k, inst.sigma, best, n_soc, len(bad),
                        rep.cost, verdict, est.upper, est.norm_bound)


def run_oracle_audit(cfg: ExperimentConfig, workers: int | None = None) -> list[OracleRecord]:
    """Exhaustive rank-one audit on ``trials`` small Z2 instances (see :func:`oracle_instance`)."""
    jobs = [(cfg, k) for k in range(cfg.trials)]
    workers = workers if workers is not None else cfg.resolved_workers()
    if workers <= 1:
        return [_oracle_task(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_oracle_task, jobs))


# ---------------------------------------------------------------------------
# persistence


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else str(v)
    return str(v)


def emit_results(table: list, fmt: str, path, config: ExperimentConfig | None = None) -> Path:
    """Write rows as CSV or JSON plus ``<path>.manifest.json``.

    Floats are written with ``repr`` (shortest exact round-trip, at most 17
    significant digits); ``None`` becomes an empty CSV cell or JSON ``null``.
    """
    if not table:
        raise ValueError("refusing to write an empty result table")
    path = Path(path)
    names = [f.name for f in dataclasses.fields(table[0])]
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        if fmt == "csv":
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(names)
                for row in table:
                    w.writerow([_fmt(getattr(row, k)) for k in names])
        elif fmt == "json":
            path.write_text(json.dumps([dataclasses.asdict(r) for r in table], indent=1))
        else:
            raise ValueError(f"unknown format {fmt!r}")
        manifest = {
            "schema_version": SCHEMA_VERSION,
            "code_version": __version__,
            "row_type": type(table[0]).__name__,
            "columns": names,
            "rows": len(table),
            "master_seed": config.master_seed if config else None,
            "config": config.to_dict() if config else None,
        }
        Path(str(path) + ".manifest.json").write_text(json.dumps(manifest, indent=2))
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc
    return path


_ROW_TYPES = {cls.__name__: cls for cls in (ResultRecord, TailRecord, OracleRecord)}


def _convert(raw: str, annotation: str):
    if raw == "":
        return None
    base = annotation.split("|")[0].strip()
    if base == "bool":
        return raw == "true"
    if base == "int":
        return int(raw)
    if base == "float":
        return float(raw)
    return raw


def read_results(path, row_type: type = ResultRecord) -> list:
    """Parse a CSV or JSON file written by :func:`emit_results`."""
    path = Path(path)
    if path.suffix == ".json":
        return [row_type(**d) for d in json.loads(path.read_text())]
    ann = {f.name: str(f.type) for f in dataclasses.fields(row_type)}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return [row_type(**{k: _convert(v, ann[k]) for k, v in rec.items()}) for rec in reader]


def deterministic_view(rows: list) -> list[tuple]:
    """Rows with timing fields removed, for bit-exact reproducibility checks."""
    out = []
    for r in rows:
        d = dataclasses.asdict(r)
        for k in NONDETERMINISTIC_FIELDS:
            d.pop(k, None)
        out.append(tuple(d.items()))
    return out
