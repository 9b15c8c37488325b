"""Command-line entry point.

    darcylayers simulate <config> [--out DIR]
    darcylayers converge --mode elliptic|dynamic [<config>] [--out DIR]
    darcylayers oracle
    darcylayers check-estimates <trajectory>

Every subcommand writes CSV tables and exits with status 1 if one of its
asserted invariants fails.
"""
from __future__ import annotations

import argparse
import io
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import estimates as est
from . import harness, oracle
from .config import RunConfig, load_config
from .transport import Trajectory, simulate, write_csv

DIVERGENCE_RTOL = 1e-10


def _csv_text(rows: list[dict]) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    keys = list(rows[0].keys())
    buf.write(",".join(keys) + "\n")
    for r in rows:
        buf.write(",".join(repr(float(r[k])) if isinstance(r[k], (float, np.floating)) else str(r[k]) for k in keys) + "\n")
    return buf.getvalue()


def _plot(path: Path, x, series: dict, xlabel: str, ylabel: str, loglog: bool = False) -> None:
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        logging.warning("matplotlib not installed; skipping %s", path)
        return
    fig, ax = plt.subplots(figsize=(5, 4))
    for label, y in series.items():
        (ax.loglog if loglog else ax.plot)(x, y, "o-" if loglog else "-", label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def _config(path) -> RunConfig:
    return load_config(path)


# -- subcommands -------------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = _config(args.config)
    if args.epsilon is not None:
        cfg = replace(cfg, epsilon=args.epsilon)
    if args.t_end is not None:
        cfg = replace(cfg, sim=replace(cfg.sim, t_end=args.t_end))
    out = Path(args.out or cfg.directory)
    if cfg.sim.checkpoint_every and not cfg.sim.checkpoint_dir:
        cfg = replace(cfg, sim=replace(cfg.sim, checkpoint_dir=str(out / "checkpoints")))
    stack, grid, profile = cfg.build()
    traj = simulate(stack, profile, cfg.sim, grid, restart=args.restart)
    traj.save(out)
    consts = est.compute_constants(stack, profile, traj.initial_l2, cfg.m4_constant)
    report = est.check_trajectory(traj, consts, tol_scale=cfg.tol_scale)
    write_csv(out / "estimates.csv", report.rows)

    ok = not traj.failed
    if traj.failed:
        print(f"FAIL run: {traj.failure}")
    worst_div = max((d.max_divergence / max(d.u_l2, 1e-300) for d in traj.diagnostics if d.u_l2 > 0), default=0.0)
    div_ok = worst_div <= DIVERGENCE_RTOL
    bc_ok = all(np.all(s.psi.values[:, [0, -1]] == 0.0) for s in traj.states)
    print(f"{'PASS' if div_ok else 'FAIL'} divergence: max per-mode |div u| / ||u|| = {worst_div:.3e}")
    print(f"{'PASS' if bc_ok else 'FAIL'} boundary: psi = 0 at z = -H, 0")
    for line in report.summary_lines():
        print(line)
    if cfg.plots or args.plot:
        t = [d.time for d in traj.diagnostics]
        _plot(out / "energy.png", t, {"||psi||": [d.psi_l2 for d in traj.diagnostics],
                                      "||sqrt(D) grad psi||": [d.grad_l2 for d in traj.diagnostics]},
              "t", "norm")
    print(f"trajectory written to {out}")
    return 0 if ok and div_ok and bc_ok else 1


def cmd_converge(args) -> int:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    if args.mode == "elliptic":
        eps = args.epsilons or [1e-1, 1e-2, 1e-3, 1e-4, 0.0]
        rep = harness.converge_elliptic(args.resolutions or [32, 64, 128], eps)
        write_csv(out / "elliptic.csv", rep.rows)
        ratios = rep.extra["ratios"]
        ratio_ok = bool(np.all(np.abs(ratios - 4.0) <= 0.8))
        slope = rep.slope("eps_error")
        slope_ok = abs(slope - 1.0) <= 0.02
        sys.stdout.write(_csv_text(rep.rows))
        print(f"{'PASS' if ratio_ok else 'FAIL'} grid order: error ratios {np.round(ratios, 4).tolist()}")
        print(f"{'PASS' if slope_ok else 'FAIL'} epsilon slope: {slope:.4f}")
        if args.plot:
            pos = rep.epsilon_list > 0
            _plot(out / "elliptic_rate.png", rep.epsilon_list[pos],
                  {"numerical": rep.errors["eps_error"][pos], "exact": rep.errors["exact_eps_error"][pos]},
                  "epsilon", "||p^eps - p^0||_H1", loglog=True)
        return 0 if ratio_ok and slope_ok else 1

    cfg = _config(args.config)
    eps = args.epsilons or [1e-1, 3e-2, 1e-2, 3e-3, 1e-3]
    rep = harness.converge_dynamic(cfg, eps, args.T, workers=args.workers)
    write_csv(out / "dynamic.csv", rep.rows)
    sys.stdout.write(_csv_text(rep.rows))
    slope = rep.slope("combined_T")
    ok = not any("failed" in n for n in rep.notes)
    slope_ok = len(eps) < 2 or 0.85 <= slope <= 1.15
    for n in rep.notes:
        print(f"note: {n}")
    print(f"{'PASS' if slope_ok else 'FAIL'} epsilon slope (combined, t=T): {slope:.4f}")
    print(f"M7 (max over eps of sup-in-time error / eps) = {rep.M7:.6e}")
    if args.plot and len(eps) > 1:
        _plot(out / "dynamic_rate.png", rep.epsilon_list,
              {k: rep.errors[f"{k}_T"] for k in harness.ERROR_NAMES}, "epsilon", "error at T", loglog=True)
    return 0 if ok and slope_ok else 1


def cmd_oracle(args) -> int:
    eps = args.epsilons or [0.0, 1e-4, 1e-3, 1e-2, 1e-1, 0.5, 1.0]
    coeffs = oracle.coefficient_table(eps)
    sys.stdout.write(_csv_text(coeffs))
    print()
    errors = [dict(epsilon=float(e), h1_error=oracle.appendix_h1_error(e),
                   h1_error_continuous=oracle.appendix_h1_error(e, "continuous")) for e in eps]
    sys.stdout.write(_csv_text(errors))
    ok = all(r["residual"] <= 1e-10 for r in coeffs)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / "oracle_coefficients.csv", coeffs)
        write_csv(out / "oracle_errors.csv", errors)
    return 0 if ok else 1


def cmd_check(args) -> int:
    traj = Trajectory.load(args.trajectory)
    consts = est.compute_constants(traj.stack, traj.profile, traj.initial_l2, args.m4_constant)
    report = est.check_trajectory(traj, consts, tol_scale=args.tol_scale)
    out = Path(args.out) if args.out else Path(args.trajectory) / "estimates.csv"
    write_csv(out, report.rows)
    print(f"M1={consts.M1:.6e} M2={consts.M2:.6e} M3={consts.M3:.6e} M4={consts.M4:.6e} "
          f"log10(M5)={consts.log10_M5:.6e} T1={consts.T1:.6e}")
    for line in report.summary_lines():
        print(line)
    return 0 if report.passed and not traj.failed else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="darcylayers", description=__doc__.splitlines()[0] if __doc__ else None)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one simulation and check the energy estimates")
    p.add_argument("config")
    p.add_argument("--out")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--t-end", type=float)
    p.add_argument("--restart", help="checkpoint stem to resume from")
    p.add_argument("--plot", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("converge", help="convergence studies")
    p.add_argument("--mode", choices=("elliptic", "dynamic"), required=True)
    p.add_argument("config", nargs="?")
    p.add_argument("--out")
    p.add_argument("--epsilons", type=float, nargs="+")
    p.add_argument("--resolutions", type=int, nargs="+")
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--workers", type=int)
    p.add_argument("--plot", action="store_true")
    p.set_defaults(func=cmd_converge)

    p = sub.add_parser("oracle", help="closed-form coefficients and exact errors")
    p.add_argument("--epsilons", type=float, nargs="+")
    p.add_argument("--out")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("check-estimates", help="check a saved trajectory against the estimates")
    p.add_argument("trajectory")
    p.add_argument("--out")
    p.add_argument("--m4-constant", type=float, default=16.0)
    p.add_argument("--tol-scale", type=float, default=10.0)
    p.set_defaults(func=cmd_check)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
