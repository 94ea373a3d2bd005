"""Command line entry point: ``gmsfem {run,sweep,hstudy,verify}``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .analysis import checks_to_csv
from .config import ConfigError, load_config
from .experiments import (Problem, emit_plot_data, records_to_csv, run_h_study, run_sweep,
                          write_sweep, _header)
from .verify import run_verification


def _config(args):
    cfg = load_config(args.config)
    if getattr(args, "full_scale", False):
        cfg.fine = (512, 512)
    if getattr(args, "output", None):
        cfg.output = args.output
    return cfg.validate()


def cmd_run(args) -> int:
    cfg = _config(args)
    nn = max(cfg.n_neumann) if args.n_neumann is None else args.n_neumann
    nd = max(cfg.n_dirichlet) if args.n_dirichlet is None else args.n_dirichlet
    if nn == 0 and nd == 0:
        raise ConfigError("a solve point needs N_N > 0 or N_D > 0")
    prob = Problem(cfg, max_neumann=nn, max_dirichlet=nd)
    rec = prob.point(nn, nd)
    text = records_to_csv([rec], _header(cfg, "run"), cfg.timing_in_csv)
    Path(cfg.output).parent.mkdir(parents=True, exist_ok=True)
    Path(cfg.output).write_text(text)
    print(f"N_N={nn} N_D={nd} dim={rec.dim} rank={rec.rank} "
          f"energy={rec.err_energy:.6e} (rel {rec.rel_energy:.3e}) l2={rec.err_l2:.6e}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _config(args)
    result = run_sweep(cfg)
    out = Path(cfg.output)
    write_sweep(result, out, cfg.timing_in_csv)
    if result.records:
        for x in ("lambda_next", "N_N"):
            plot = emit_plot_data(result.records, x=x, y="energy", groups=sorted(set(cfg.n_dirichlet)))
            out.with_suffix(f".plot_{x}.csv").write_text(plot)
    for r in sorted(result.records, key=lambda r: (r.N_D, r.N_N)):
        print(f"N_D={r.N_D:3d} N_N={r.N_N:3d} lambda_next={r.lambda_next:.4e} "
              f"energy={r.err_energy:.6e}")
    for nn, nd, msg in result.failures:
        print(f"FAILED N_N={nn} N_D={nd}: {msg}", file=sys.stderr)
    return 0 if result.ok else 1


def cmd_hstudy(args) -> int:
    cfg = _config(args)
    study = run_h_study(cfg)
    Path(cfg.output).parent.mkdir(parents=True, exist_ok=True)
    Path(cfg.output).write_text(study.to_csv())
    for H, e in zip(study.H, study.err_energy):
        print(f"H={H:.6g} energy={e:.6e}")
    print(f"slope={study.slope:.4f}")
    return 0


def cmd_verify(args) -> int:
    checks = run_verification(seed=args.seed)
    failed = [c for c in checks if not c.passed]
    width = max(len(c.name) for c in checks)
    for c in checks if args.verbose else failed:
        print(f"{c.name:<{width}}  {c.lhs: .6e} <= {c.rhs: .6e} + {c.slack:.1e}  "
              f"{'PASS' if c.passed else 'FAIL'}")
    print(f"{len(checks) - len(failed)}/{len(checks)} checks passed")
    if args.output:
        Path(args.output).write_text(checks_to_csv(checks))
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gmsfem", description=__doc__)
    p.add_argument("-v", "--log-level", default="WARNING")
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn, helptext in (("run", cmd_run, "solve one (N_N, N_D) point"),
                               ("sweep", cmd_sweep, "sweep the configured counts"),
                               ("hstudy", cmd_hstudy, "coarse-size convergence study")):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("--config", required=True)
        s.add_argument("--output", help="override the configured output path")
        s.add_argument("--full-scale", action="store_true", help="use a 512x512 fine grid")
        s.set_defaults(func=fn)
        if name == "run":
            s.add_argument("--n-neumann", type=int)
            s.add_argument("--n-dirichlet", type=int)
    s = sub.add_parser("verify", help="identity and inequality checks on small grids")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--output", help="write the verification CSV here")
    s.add_argument("--verbose", action="store_true", help="print every check")
    s.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
