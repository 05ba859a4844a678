"""Command line entry point: ``bmsync {gen,solve,certify,sweep,tails,oracle}``.

Exit codes: 0 success, 1 configuration error, 2 runtime failure,
3 failed ``--expect-*`` assertion.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import circlefold as cf
from .harness import (ConfigError, ExperimentConfig, aggregate, derive_seed, emit_results,
                      parse_config_text, run_oracle_audit, run_sweep, run_tails)

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_ASSERT = 0, 1, 2, 3


class AssertionFailure(Exception):
    pass


def _config(args, **defaults) -> ExperimentConfig:
    pre = [f"{k}={v}" for k, v in defaults.items()]
    overrides = pre + list(args.set or [])
    if args.config:
        text = Path(args.config).read_text() if Path(args.config).exists() else None
        if text is None:
            raise ConfigError(f"config file {args.config} not found")
        return parse_config_text("\n".join(pre) + "\n" + text, args.set or [])
    return parse_config_text("", overrides)


def _load_problem(stem: str):
    from .models import SbmInstance, load_instance

    inst = load_instance(stem)
    if isinstance(inst, SbmInstance):
        return inst.Anat, inst.g
    return inst.Y, inst.z


def _write(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen(args) -> int:
    from .models import gen_sbm, gen_z2, save_instance

    model = args.model
    cfg = _config(args, experiment="sbm-sweep" if model == "sbm" else "solve-one")
    seed = derive_seed(cfg.master_seed, 0, 0)
    if model == "sbm":
        inst = gen_sbm(cfg.n, a=cfg.a[0], b=cfg.b[0], rng=seed)
    else:
        point = cfg.grid()[0]
        inst = gen_z2(cfg.n, sigma=point.get("sigma"), lam=point.get("lam"), rng=seed)
    paths = save_instance(inst, args.out)
    print(json.dumps({"matrix": str(paths[0]), "meta": str(paths[1]), "seed": seed}))
    return EXIT_OK


def cmd_solve(args) -> int:
    from .solver import solve_rank2

    cfg = _config(args, experiment="solve-one")
    A, _ = _load_problem(args.instance)
    init = cf.load_point(args.init) if args.init else None
    rep = solve_rank2(A, cfg.solver, init=init)
    cf.save_point(args.out + ".pt", rep.point)
    Path(args.out + ".json").write_text(rep.to_json(indent=2) + "\n")
    print(json.dumps({"status": rep.status, "cost": rep.cost, "grad_residual": rep.grad_residual,
                      "hess_min_eig": rep.hess_min_eig}))
    return EXIT_OK


def cmd_certify(args) -> int:
    from .certify import INCONCLUSIVE, dual_certificate

    A, z = _load_problem(args.instance)
    Q = cf.load_point(args.point)
    if Q.shape[0] != A.n:
        raise ConfigError(f"point has {Q.shape[0]} rows but the matrix has n={A.n}")
    rep = dual_certificate(A, Q, tol=args.tol, z=z if args.with_truth else None)
    _write(rep.to_json(indent=2), args.out)
    if args.expect_certified and rep.verdict == INCONCLUSIVE:
        raise AssertionFailure("certificate inconclusive")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _config(args)
    rows = run_sweep(cfg, workers=args.workers)
    out = args.out or cfg.output
    if out:
        emit_results(rows, cfg.format, out, cfg)
    aggs = aggregate(rows)
    print(json.dumps(aggs, indent=1))
    failures = []
    for g in aggs:
        if args.expect_min_correlation is not None and (
                g["min_correlation"] is None or g["min_correlation"] < args.expect_min_correlation):
            failures.append(f"grid {g['grid_index']}: min correlation {g['min_correlation']}")
        if args.expect_exact_rate is not None and (
                g["exact_rate"] is None or g["exact_rate"] < args.expect_exact_rate):
            failures.append(f"grid {g['grid_index']}: exact rate {g['exact_rate']}")
    if failures:
        raise AssertionFailure("; ".join(failures))
    return EXIT_OK


def cmd_tails(args) -> int:
    cfg = _config(args, experiment="tails")
    rows = run_tails(cfg)
    out = args.out or cfg.output
    if out:
        emit_results(rows, cfg.format, out, cfg)
    for r in rows:
        print(f"t={r.t:g} spec_freq={r.spec_freq:.4f} bound={r.spec_bound:.4f} "
              f"inf_freq={r.inf_freq:.4f} inf_bound={r.inf_bound:.4f}")
    if args.expect_bounds:
        bad = [r.t for r in rows if r.spec_freq > r.spec_bound + args.slack]
        if bad:
            raise AssertionFailure(f"spectral tail exceeds bound at t={bad}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    cfg = _config(args, experiment="oracle-audit", n=12)
    rows = run_oracle_audit(cfg, workers=args.workers)
    out = args.out or cfg.output
    if out:
        emit_results(rows, cfg.format, out, cfg)
    bad = sum(r.counterexamples for r in rows)
    if bad:
        from .harness import oracle_instance
        from .models import save_instance

        dump = Path(out).parent if out else Path(".")
        for r in rows:
            if r.counterexamples:
                save_instance(oracle_instance(cfg, r.instance)[1], dump / f"counter_candidate_{r.instance}")
    print(json.dumps({"instances": len(rows), "soc_points": sum(r.n_soc_points for r in rows),
                      "counterexamples": bad}))
    if bad:
        raise AssertionFailure(f"{bad} second-order critical rank-one points below the optimum")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bmsync", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="key = value configuration file")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a configuration key (repeatable)")

    g = sub.add_parser("gen", help="generate an instance (<out>.coo + <out>.json)")
    common(g)
    g.add_argument("--model", choices=("z2", "sbm"), default="z2")
    g.add_argument("--out", required=True, help="output stem")
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("solve", help="solve the rank-2 program for a saved instance")
    common(s)
    s.add_argument("--instance", required=True, help="instance stem")
    s.add_argument("--init", help="initial point file")
    s.add_argument("--out", required=True, help="output stem for <out>.pt and <out>.json")
    s.set_defaults(func=cmd_solve)

    c = sub.add_parser("certify", help="certificate report for a point")
    c.add_argument("--instance", required=True)
    c.add_argument("--point", required=True)
    c.add_argument("--tol", type=float, default=1e-8)
    c.add_argument("--with-truth", action="store_true", help="also test exact recovery and uniqueness")
    c.add_argument("--expect-certified", action="store_true")
    c.add_argument("--out")
    c.set_defaults(func=cmd_certify)

    w = sub.add_parser("sweep", help="run a z2-sweep, exact-recovery or sbm-sweep")
    common(w)
    w.add_argument("--workers", type=int)
    w.add_argument("--out")
    w.add_argument("--expect-min-correlation", type=float)
    w.add_argument("--expect-exact-rate", type=float)
    w.set_defaults(func=cmd_sweep)

    t = sub.add_parser("tails", help="Wigner norm tail frequencies")
    common(t)
    t.add_argument("--out")
    t.add_argument("--expect-bounds", action="store_true")
    t.add_argument("--slack", type=float, default=0.02)
    t.set_defaults(func=cmd_tails)

    o = sub.add_parser("oracle", help="exhaustive rank-one audit on small Z2 instances")
    common(o)
    o.add_argument("--workers", type=int)
    o.add_argument("--out")
    o.set_defaults(func=cmd_oracle)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AssertionFailure as exc:
        print(f"assertion failed: {exc}", file=sys.stderr)
        return EXIT_ASSERT
    except Exception as exc:  # noqa: BLE001 -- surfaced as a runtime failure code
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
