"""Command line entry point ``ma1lab``.

Exit codes: 0 success, 2 config or input error, 3 numeric failure,
4 threshold failure under ``--check``.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from ..estimator import ClippedTrajectoryError, ReconstructionError, rm_decomposition, run
from ..robbins_monro import RmDivergenceError, mean_field_limits, oscillation
from ..simulate import InnovationSpec, read_path_csv, simulate
from ..spectral import DomainError, QuadratureError
from ..zerosets import NoSignChangeError, find_zero_set
from .config import ConfigError, load_config
from .runner import MissingArtifactError, NumericFailure, beta_tag, diagnose, fmt, run_experiment, write_report

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_CHECK = 0, 2, 3, 4
NUMERIC_ERRORS = (NumericFailure, QuadratureError, DomainError, NoSignChangeError, ReconstructionError,
                  RmDivergenceError, ClippedTrajectoryError, ArithmeticError)


def _config(args):
    return load_config(args.config).with_overrides(seed=args.seed, threads=getattr(args, "threads", None))


def _out_dir(args, default: str) -> Path:
    out = Path(args.out or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args) -> int:
    cfg = _config(args)
    path = simulate(cfg.model, InnovationSpec(cfg.innovation.law, cfg.seed), cfg.T, cfg.burn_in)
    dest = Path(args.out or "path.csv")
    dest.parent.mkdir(parents=True, exist_ok=True)
    path.to_csv(dest)
    print(f"wrote {len(path)} observations to {dest}")
    return EXIT_OK


def cmd_estimate(args) -> int:
    cfg = _config(args)
    if args.input:
        y, _ = read_path_csv(args.input)
    else:
        y = simulate(cfg.model, InnovationSpec(cfg.innovation.law, cfg.seed), cfg.T, cfg.burn_in).y
    out = _out_dir(args, "estimate_out")
    betas = cfg.betas if args.beta is None else (args.beta,)
    for b in betas:
        traj = run(y, b, cfg.monitor_for(b))
        traj.to_csv(out / f"traj_{beta_tag(b)}.csv", cfg.trajectory_stride)
        dec = rm_decomposition(traj.theta, traj.k_star, cfg.model, b, cfg.quadrature)
        dec.to_csv(out / f"approx_{beta_tag(b)}.csv", stride=cfg.diagnostics_stride)
        print(f"beta={beta_tag(b)} theta_T={fmt(traj.theta[-1])} theta_hat_T={fmt(dec.theta_hat[-1])} "
              f"clips={len(traj.clip_events)} k_star={traj.k_star}")
    return EXIT_OK


def cmd_zeroset(args) -> int:
    cfg = _config(args)
    out = _out_dir(args, "zeroset_out")
    for b in cfg.betas:
        zs = find_zero_set(cfg.model, b, cfg.grid_points, cfg.root_tol, cfg.quadrature)
        zs.to_csv(out / f"zeroset_{beta_tag(b)}.csv")
        print(f"beta={beta_tag(b)} zeros: {' '.join(fmt(t) for t in zs.thetas)}")
    return EXIT_OK


def cmd_rm_check(args) -> int:
    cfg = _config(args)
    starts = np.linspace(-0.95, 0.95, args.starts)
    ok = True
    for b in cfg.betas:
        zs = find_zero_set(cfg.model, b, cfg.grid_points, cfg.root_tol, cfg.quadrature)
        it = mean_field_limits(cfg.model, b, starts, args.steps)
        dist = float(np.max(zs.distance(it[-1])))
        osc = float(np.max(oscillation(it, 0.1)))
        passed = dist < args.tol
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'} beta={beta_tag(b)} max distance {fmt(dist)} "
              f"(tol {fmt(args.tol)}), last-decade oscillation {fmt(osc)}")
    return EXIT_CHECK if args.check and not ok else EXIT_OK


def cmd_experiment(args) -> int:
    cfg = _config(args)
    out = _out_dir(args, "experiment_out")
    res = run_experiment(cfg, out)
    for tag, a in res.aggregates["per_beta"].items():
        print(f"beta={tag} mean distance {fmt(a['mean_distance'])} mean loss {fmt(a['mean_loss'])}")
    for c in res.checks:
        print(c.line())
    print(f"outputs in {out}")
    return EXIT_CHECK if args.check and not res.passed else EXIT_OK


def cmd_diagnose(args) -> int:
    rep = diagnose(args.run_dir, args.beta, None, args.gap_tol, args.phi_ratio)
    for line in rep.lines():
        print(line)
    write_report(rep, Path(args.out) if args.out else Path(args.run_dir) / "diagnose.csv")
    return EXIT_CHECK if args.check and not rep.passed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ma1lab", description="MA(1) recursive estimation experiments")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, threads=False):
        sp.add_argument("config", help="INI experiment config")
        sp.add_argument("--seed", type=int, default=None, help="override the base seed")
        sp.add_argument("--out", default=None, help="output file or directory")
        if threads:
            sp.add_argument("--threads", type=int, default=None, help="worker processes")
        sp.add_argument("--check", action="store_true", help="exit 4 when a threshold fails")

    sp = sub.add_parser("simulate", help="simulate one path to CSV")
    common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("estimate", help="run the recursion on a simulated or given path")
    common(sp)
    sp.add_argument("--beta", type=float, default=None)
    sp.add_argument("--input", default=None, help="path CSV (t, y, innovation)")
    sp.set_defaults(func=cmd_estimate)

    sp = sub.add_parser("zeroset", help="zero sets of the mean field")
    common(sp)
    sp.set_defaults(func=cmd_zeroset)

    sp = sub.add_parser("rm-check", help="Robbins-Monro oracle from many starts")
    common(sp)
    sp.add_argument("--steps", type=int, default=2000)
    sp.add_argument("--starts", type=int, default=20)
    sp.add_argument("--tol", type=float, default=1e-4)
    sp.set_defaults(func=cmd_rm_check)

    sp = sub.add_parser("experiment", help="replicated experiment")
    common(sp, threads=True)
    sp.set_defaults(func=cmd_experiment)

    sp = sub.add_parser("diagnose", help="approximation diagnostics of a finished experiment")
    sp.add_argument("run_dir")
    sp.add_argument("--beta", type=float, action="append", default=None)
    sp.add_argument("--gap-tol", type=float, default=0.02)
    sp.add_argument("--phi-ratio", type=float, default=0.9)
    sp.add_argument("--out", default=None, help="report CSV (default <run_dir>/diagnose.csv)")
    sp.add_argument("--check", action="store_true")
    sp.set_defaults(func=cmd_diagnose)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, MissingArtifactError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERIC_ERRORS as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
