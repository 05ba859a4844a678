"""Acceptance gate: eleven criteria at their stated tolerances.

Each criterion is computed once (cached) and reported as one PASS/FAIL line in
the terminal summary (see ``conftest.pytest_terminal_summary``). Every
instance solved by criteria 2-8 is registered so that criterion 10 can check
the value sandwich on all of them.
"""
import functools
import math
import time
from dataclasses import dataclass, field

import numpy as np
from bmsync import circlefold as cf
from bmsync.certify import (RANK_DEFICIENT_GLOBAL, dual_certificate,
                            sdp_value_estimate, uniqueness_check)
from bmsync.harness import deterministic_view, derive_seed, emit_results, parse_config_text, run_sweep
from bmsync.models import gen_sbm, gen_z2, tail_check_wigner, wigner_offdiag
from bmsync.oracle import audit_rank_one_optimality, mle_bruteforce, verify_deterministic_lemmas
from bmsync.recover import correlation, exact_recovery, frobenius_gap
from bmsync.solver import CONVERGED, SolverConfig, solve_rank2
from bmsync.specmat import DenseOp, SpikeNoiseOp

RESULTS: dict = {}
MASTER = 20240611


@dataclass
class Solved:
    label: str
    make: object  # () -> SymOp, regenerates the instance deterministically
    n: int
    cost: float
    point: np.ndarray
    exact_mle: bool = False


REGISTRY: list = []


def _register(label, make, reports, exact_mle=False):
    best = max(reports, key=lambda r: r.cost)
    REGISTRY.append(Solved(label, make, best.point.shape[0], best.cost, best.point, exact_mle))


def report(key, title, ok, detail):
    RESULTS[key] = (title, bool(ok), detail)
    return ok


@dataclass
class Outcome:
    ok: bool
    detail: str
    extra: dict = field(default_factory=dict)


def _check(key, title, out: Outcome):
    report(key, title, out.ok, out.detail)
    assert out.ok, out.detail


# ---------------------------------------------------------------------------
# 1. calculus


@functools.cache
def crit1():
    t0 = time.perf_counter()
    rng = np.random.default_rng(derive_seed(MASTER, 1))
    worst_g = worst_h = 0.0
    for _ in range(100):
        n = int(rng.integers(2, 51))
        M = rng.standard_normal((n, n))
        A = DenseOp(M + M.T)
        Q = cf.random_point(n, rng)
        alpha = rng.standard_normal(n)
        f = lambda t: cf.cost(A, cf.retract(Q, alpha, t))  # noqa: E731
        g = float(cf.rgrad(A, Q) @ alpha)
        h = 1e-6
        fd = (f(h) - f(-h)) / (2 * h)
        worst_g = max(worst_g, abs(fd - g) / max(abs(g), 1e-3 * np.linalg.norm(cf.rgrad(A, Q)) * np.linalg.norm(alpha)))
        H = cf.hess_matrix(A, Q)
        want = -2.0 * float(alpha @ H.matvec(alpha))
        h = 1e-4
        fd2 = (f(h) - 2 * f(0.0) + f(-h)) / h**2
        hn = np.linalg.norm(H.to_dense(), 2) * float(alpha @ alpha)
        worst_h = max(worst_h, abs(fd2 - want) / max(abs(want), 1e-3 * 2 * hn))
    dt = time.perf_counter() - t0
    ok = worst_g <= 1e-5 and worst_h <= 1e-4 and dt < 60
    return Outcome(ok, f"max rel grad err {worst_g:.2e} (<=1e-5), max rel curvature err {worst_h:.2e} (<=1e-4), {dt:.1f}s")


def test_c01_calculus():
    _check(1, "calculus vs finite differences", crit1())


# ---------------------------------------------------------------------------
# 2. optimality identities


@functools.cache
def crit2():
    bad = []
    worst15 = 0.0
    for k in range(100):
        seed = derive_seed(MASTER, 2, k)
        rng = np.random.default_rng(seed)
        n = int(rng.integers(20, 301))
        sigma = float(rng.choice([0.0, 0.5, 2.0, 5.0, 10.0, 30.0]))
        inst = gen_z2(n, sigma=sigma, rng=seed)
        rep = solve_rank2(inst.Y, SolverConfig(seed=seed))
        _register(f"c2/{k}", functools.partial(lambda n, s, sd: gen_z2(n, sigma=s, rng=sd).Y, n, sigma, seed), [rep])
        A = inst.Y
        R = cf.first_order_residual_matrix(A, rep.point)
        gres = float(np.linalg.norm(R))
        Ad = A.to_dense()
        x, y = rep.point[:, 0], rep.point[:, 1]
        e15 = float(np.abs((Ad @ x) * y - (Ad @ y) * x).max())
        norm = float(np.abs(np.linalg.eigvalsh(Ad)).max())
        worst15 = max(worst15, e15 / norm)
        if rep.status != CONVERGED or gres > rep.grad_tol or e15 > 1e-8 * norm:
            bad.append((k, rep.status, gres, rep.grad_tol, e15 / norm))
    ok = not bad
    return Outcome(ok, f"{100 - len(bad)}/100 converged points meet both identities; max |Ax.y-Ay.x|/||A|| {worst15:.1e}"
                   + (f"; failures {bad[:3]}" if bad else ""))


def test_c02_optimality_identities():
    _check(2, "first-order identities at converged points", crit2())


# ---------------------------------------------------------------------------
# 3. noiseless recovery


@functools.cache
def crit3():
    t0 = time.perf_counter()
    seed = derive_seed(MASTER, 3)
    inst = gen_z2(100, sigma=0.0, rng=seed)
    reps, bad = [], []
    for k in range(50):
        rep = solve_rank2(inst.Y, SolverConfig(seed=derive_seed(MASTER, 3, k)))
        reps.append(rep)
        gap = frobenius_gap(rep.point, inst.z)
        verdict = dual_certificate(inst.Y, rep.point).verdict
        if rep.status != CONVERGED or gap > 1e-6 or verdict != RANK_DEFICIENT_GLOBAL:
            bad.append((k, rep.status, gap, verdict))
    _register("c3", functools.partial(lambda s: gen_z2(100, sigma=0.0, rng=s).Y, seed), reps)
    dt = time.perf_counter() - t0
    ok = not bad and dt < 60
    return Outcome(ok, f"{50 - len(bad)}/50 inits recover zz^T (gap<=1e-6) with verdict {RANK_DEFICIENT_GLOBAL}, {dt:.1f}s"
                   + (f"; failures {bad[:3]}" if bad else ""))


def test_c03_noiseless_recovery():
    _check(3, "noiseless exact recovery", crit3())


# ---------------------------------------------------------------------------
# 4. strong-signal correlation bound


@functools.cache
def crit4():
    t0 = time.perf_counter()
    lam, bound = 20.0, 1 - 1.1 * 16 / 20
    n_conv = n_cert = 0
    worst = math.inf
    violations = []
    for t in range(50):
        seed = derive_seed(MASTER, 4, t)
        inst = gen_z2(500, lam=lam, rng=seed)
        reps = []
        for r in range(5):
            rep = solve_rank2(inst.Y, SolverConfig(seed=derive_seed(MASTER, 4, t, r)))
            reps.append(rep)
            if rep.status != CONVERGED:
                continue
            n_conv += 1
            cert = dual_certificate(inst.Y, rep.point)
            n_cert += cert.verdict != "inconclusive"
            c = correlation(rep.point, inst.z)
            worst = min(worst, c)
            if c < bound:
                violations.append((t, r, c, cert.verdict))
        _register(f"c4/{t}", functools.partial(lambda s: gen_z2(500, lam=20.0, rng=s).Y, seed), reps)
    dt = time.perf_counter() - t0
    ok = n_conv > 0 and not violations and dt < 600
    return Outcome(ok, f"{n_conv}/250 converged ({n_cert} certified), min correlation {worst:.4f} >= {bound:.2f}, "
                   f"{len(violations)} violations, {dt:.0f}s")


def test_c04_strong_signal_correlation():
    _check(4, "correlation bound at lambda=20", crit4())


# ---------------------------------------------------------------------------
# 5. exact-recovery regime


@functools.cache
def crit5():
    t0 = time.perf_counter()
    rates = {}
    for sigma in (4.0, 30.0):
        rec = uniq = 0
        for t in range(50):
            seed = derive_seed(MASTER, 5, int(sigma), t)
            inst = gen_z2(500, sigma=sigma, rng=seed)
            rep = solve_rank2(inst.Y, SolverConfig(seed=seed))
            _register(f"c5/{sigma:g}/{t}", functools.partial(lambda s, sd: gen_z2(500, sigma=s, rng=sd).Y, sigma, seed), [rep])
            rec += rep.status == CONVERGED and exact_recovery(rep.point, inst.z)
            uniq += uniqueness_check(inst.Y, inst.z, seed=t)
        rates[sigma] = (rec / 50, uniq / 50)
    dt = time.perf_counter() - t0
    ok = rates[4.0][0] >= 0.9 and rates[4.0][1] >= 0.9 and rates[30.0][0] <= 0.1 and dt < 600
    return Outcome(ok, f"sigma=4: recovery {rates[4.0][0]:.2f} (>=0.9), unique {rates[4.0][1]:.2f} (>=0.9); "
                   f"sigma=30: recovery {rates[30.0][0]:.2f} (<=0.1); {dt:.0f}s")


def test_c05_exact_recovery_regime():
    _check(5, "exact-recovery regime at n=500", crit5())


# ---------------------------------------------------------------------------
# 6. two-community SBM


@functools.cache
def crit6():
    t0 = time.perf_counter()
    worst = math.inf
    for t in range(20):
        seed = derive_seed(MASTER, 6, t)
        inst = gen_sbm(1000, a=200, b=2, rng=seed)
        reps = [solve_rank2(inst.Anat, SolverConfig(seed=derive_seed(MASTER, 6, t, r))) for r in range(5)]
        worst = min(worst, min(correlation(r.point, inst.g) for r in reps))
        _register(f"c6/{t}", functools.partial(lambda s: gen_sbm(1000, a=200, b=2, rng=s).Anat, seed), reps)
    dt = time.perf_counter() - t0
    ok = worst >= 0.1 and dt < 600
    return Outcome(ok, f"lambda(a,b)={(198 / math.sqrt(404)):.2f}, min correlation over 100 solves {worst:.4f} (>=0.1), {dt:.0f}s")


def test_c06_sbm_regime():
    _check(6, "SBM a=200 b=2 correlation", crit6())


# ---------------------------------------------------------------------------
# 7. rank-one optimality audit


@functools.cache
def crit7():
    t0 = time.perf_counter()
    sigmas = (0.5, 1.0, 1.5, 2.0, 2.5)
    n_points = n_bad = n_with = 0
    for k in range(200):
        seed = derive_seed(MASTER, 7, k)
        inst = gen_z2(12, sigma=sigmas[k % len(sigmas)], rng=seed)
        count, bad = audit_rank_one_optimality(inst.Y)
        n_points += count
        n_with += count > 0
        n_bad += len(bad)
        rep = solve_rank2(inst.Y, SolverConfig(seed=seed))
        _register(f"c7/{k}", functools.partial(lambda s, sd: gen_z2(12, sigma=s, rng=sd).Y, sigmas[k % len(sigmas)], seed),
                  [rep], exact_mle=True)
    dt = time.perf_counter() - t0
    ok = n_bad == 0 and dt < 300
    return Outcome(ok, f"200 instances, {n_points} second-order critical rank-one points on {n_with} instances, "
                   f"{n_bad} below the exhaustive optimum, {dt:.0f}s")


def test_c07_rank_one_audit():
    _check(7, "rank-one second-order points are MLE optima (n=12)", crit7())


# ---------------------------------------------------------------------------
# 8. deterministic correlation bounds


@functools.cache
def crit8():
    n = 200
    held = {"X-correlation": [0, 0], "Q-correlation": [0, 0], "rank-one": [0, 0]}
    failures = []
    n_cert = 0
    for k in range(50):
        seed = derive_seed(MASTER, 8, k)
        rng = np.random.default_rng(seed)
        W = wigner_offdiag(n, rng)
        z = rng.choice([-1.0, 1.0], n)
        c = 0.12 * (k + 1) / 50
        A = SpikeNoiseOp(z, W, c * math.sqrt(n))
        rep = solve_rank2(A, SolverConfig(seed=seed))
        _register(f"c8/{k}", functools.partial(_c8_instance, seed, c), [rep])
        if rep.status != CONVERGED:
            continue
        n_cert += 1
        eps = max(0.0, -rep.hess_min_eig)
        out = verify_deterministic_lemmas(z, DenseOp(W), c, rep.point, eps=eps)
        for ch in out.checks:
            if ch.hypothesis:
                held[ch.name][0] += 1
                held[ch.name][1] += ch.conclusion
                if not ch.conclusion:
                    failures.append((k, ch.name, ch.value, ch.bound))
    ok = not failures and n_cert > 0 and held["X-correlation"][0] > 0 and held["Q-correlation"][0] > 0
    parts = ", ".join(f"{k}: {v[1]}/{v[0]}" for k, v in held.items())
    return Outcome(ok, f"{n_cert}/50 certified points; conclusions held / hypotheses held: {parts}"
                   + (f"; failures {failures[:3]}" if failures else ""))


def _c8_instance(seed, c):
    rng = np.random.default_rng(seed)
    W = wigner_offdiag(200, rng)
    z = rng.choice([-1.0, 1.0], 200)
    return SpikeNoiseOp(z, W, c * math.sqrt(200))


def test_c08_deterministic_bounds():
    _check(8, "deterministic correlation bounds (n=200)", crit8())


# ---------------------------------------------------------------------------
# 9. Wigner spectral tail


@functools.cache
def crit9():
    t0 = time.perf_counter()
    rows = tail_check_wigner(300, 200, [2.0, 4.0, 6.0], rng=derive_seed(MASTER, 9))
    ok = all(r.spec_freq <= r.spec_bound + 0.02 for r in rows) and time.perf_counter() - t0 < 300
    dt = time.perf_counter() - t0
    detail = "; ".join(f"t={r.t:g}: freq {r.spec_freq:.3f} <= {r.spec_bound:.4f}+0.02" for r in rows)
    return Outcome(ok, f"{detail}; {dt:.0f}s")


def test_c09_wigner_tail():
    _check(9, "Wigner norm tail n=300", crit9())


# ---------------------------------------------------------------------------
# 10. value sandwich on every solved instance


@functools.cache
def crit10():
    for fn in (crit2, crit3, crit4, crit5, crit6, crit7, crit8):
        fn()
    t0 = time.perf_counter()
    bad = []
    n_mle = 0
    worst = -math.inf
    for s in REGISTRY:
        A = s.make()
        Ad = A.to_dense()
        norm = float(np.abs(np.linalg.eigvalsh(Ad)).max())
        assert abs(cf.cost(A, s.point) - s.cost) <= 1e-9 * max(1.0, abs(s.cost))  # regenerated faithfully
        est = sdp_value_estimate(A, SolverConfig(seed=0), init=s.point)
        chain = [s.cost, est.upper, s.n * norm]
        if s.exact_mle:
            n_mle += 1
            chain.insert(0, mle_bruteforce(Ad).best_value)
        # equal links (a rank-2 solve landing on the rank-one optimum) differ by a few ulps
        # depending on evaluation order, so each comparison carries the same 1e-9 allowance
        excess = max(a - b for a, b in zip(chain, chain[1:]))
        worst = max(worst, excess)
        if excess > 1e-9:
            bad.append((s.label, chain))
    dt = time.perf_counter() - t0
    ok = len(REGISTRY) > 0 and not bad
    return Outcome(ok, f"{len(REGISTRY) - len(bad)}/{len(REGISTRY)} instances satisfy "
                   f"mle <= cost <= SDP upper <= n||A|| within 1e-9 ({n_mle} with exhaustive MLE; "
                   f"largest raw excess {worst:.1e}), {dt:.0f}s"
                   + (f"; failures {bad[:3]}" if bad else ""))


def test_c10_value_sandwich():
    _check(10, "value sandwich on every solved instance", crit10())


# ---------------------------------------------------------------------------
# 11. determinism across worker counts


@functools.cache
def crit11(tmpdir):
    configs = [
        "experiment = z2-sweep\nn = 200\nlambda = 4, 16\ntrials = 3\nrestarts = 2\nmaster_seed = 99",
        "experiment = exact-recovery\nn = 150\nsigma = 2, 9\ntrials = 2\nmaster_seed = 7",
        "experiment = sbm-sweep\nn = 300\na = 60, 30\nb = 2, 5\ntrials = 2\nrestarts = 2\nmaster_seed = 5",
    ]
    bad = []
    for i, text in enumerate(configs):
        cfg = parse_config_text(text)
        a = run_sweep(cfg, workers=1)
        b = run_sweep(cfg, workers=2)
        files = []
        for tag, rows in (("w1", a), ("w2", b)):
            for r in rows:
                r.wall_time = 0.0  # timing is the one field outside the reproducibility contract
            files.append(emit_results(rows, "csv", f"{tmpdir}/{i}_{tag}.csv", cfg).read_bytes())
        if deterministic_view(a) != deterministic_view(b) or files[0] != files[1]:
            bad.append(cfg.experiment)
    ok = not bad
    return Outcome(ok, f"{len(configs) - len(bad)}/{len(configs)} sweeps bit-identical with 1 vs 2 workers"
                   + (f"; differing: {bad}" if bad else ""))


def test_c11_determinism(tmp_path_factory):
    _check(11, "determinism across worker counts", crit11(str(tmp_path_factory.mktemp("det"))))
