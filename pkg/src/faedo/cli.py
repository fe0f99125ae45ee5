"""Command-line entry point: ``faedo <subcommand> --config PATH|default``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure
(non-contraction, iteration cap, failed derivative check), 4 I/O error.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys

import numpy as np

from . import harness
from .derivative import Linearization, random_unit_trajectories
from .evolution import l2_norms
from .fixed_point import MaxIterations, NonContraction, apply_Kn, free_evolution, solve_fixed_point
from .function_space import project_Qn, sample_norms, traj_norm

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

SUBCOMMANDS = ("propagate", "fixed-point", "derivative-check", "sweep", "hypotheses", "dispersion")


class NumericalFailure(RuntimeError):
    pass


def _cmd_propagate(cfg):
    rows = []
    for n in cfg.n_values:
        problem = cfg.problem(n)
        psi0 = project_Qn(problem.basis, cfg.initial_field())
        traj = apply_Kn(problem, free_evolution(problem, psi0), psi0)
        l2 = l2_norms(problem, traj.coeffs)
        drift = float(np.max(np.abs(l2**2 - l2[0] ** 2))) / cfg.horizon
        h1 = float(np.max(sample_norms(traj.coeffs)))
        rows.append({"n": n, "l2_drift": drift, "h1_max": h1})
        print(f"n={n} l2_drift_per_time={drift:.3e} h1_max={h1:.6g}")
    harness.write_outputs(cfg, "propagate", harness.table_csv(rows, ("n", "l2_drift", "h1_max")), rows)


def _cmd_fixed_point(cfg):
    rows = []
    for n in cfg.n_values:
        problem = cfg.problem(n)
        psi0 = project_Qn(problem.basis, cfg.initial_field())
        psi, it = solve_fixed_point(problem, psi0, cfg.fixed_point)
        residual = traj_norm(apply_Kn(problem, psi, psi0), psi)
        rows.append({"n": n, "iters": it.iterations, "residual": residual, "max_ratio": it.max_ratio, "contraction": it.contraction})
        print(f"n={n} iters={it.iterations} residual={residual:.3e} max_ratio={it.max_ratio:.4f}")
    cols = ("n", "iters", "residual", "max_ratio", "contraction")
    harness.write_outputs(cfg, "fixed_point", harness.table_csv(rows, cols), rows)


def fd_check(cfg, n, eps_values=None):
    """Finite-difference errors of K_n' at the fixed point for one random direction.

    Returns ``(errors, slopes)`` where ``slopes[i]`` is the log-log slope
    between ``eps[i]`` and ``eps[i+1]``.
    """
    eps_values = cfg.fd_steps if eps_values is None else eps_values
    problem = cfg.problem(n)
    psi0 = project_Qn(problem.basis, cfg.initial_field())
    psi, _ = solve_fixed_point(problem, psi0, cfg.fixed_point)
    rng = np.random.default_rng([cfg.seed, n])
    omega = random_unit_trajectories(rng, 1, psi.coeffs.shape)[0]
    deriv = Linearization(problem, psi, psi0).apply(omega[None])[0]
    base = apply_Kn(problem, psi, psi0).coeffs
    errors = []
    for eps in eps_values:
        moved = apply_Kn(problem, psi.replace(psi.coeffs + eps * omega), psi0).coeffs
        errors.append(float(np.max(sample_norms((moved - base) / eps - deriv))))
    slopes = [
        math.log(errors[i + 1] / errors[i]) / math.log(eps_values[i + 1] / eps_values[i])
        for i in range(len(errors) - 1)
    ]
    return errors, slopes


def _cmd_derivative_check(cfg):
    rows, ok = [], True
    for n in cfg.n_values:
        errors, slopes = fd_check(cfg, n)
        for i, eps in enumerate(cfg.fd_steps):
            slope = slopes[i - 1] if i else math.nan
            rows.append({"n": n, "eps": eps, "fd_error": errors[i], "slope": slope})
        passed = all(0.8 <= s <= 1.2 for s in slopes)
        ok &= passed
        print(f"n={n} fd_errors=" + ",".join(f"{e:.3e}" for e in errors)
              + " slopes=" + ",".join(f"{s:.3f}" for s in slopes) + (" PASS" if passed else " FAIL"))
    harness.write_outputs(cfg, "derivative_check", harness.table_csv(rows, ("n", "eps", "fd_error", "slope")), rows)
    if not ok:
        raise NumericalFailure("finite-difference slope outside [0.8, 1.2]")


def _print_rows(report):
    for r in report.rows:
        if "error" in r:
            print(f"n={r['n']} FAILED {r['error']}")
        else:
            print(f"n={r['n']} e_total={r['e_total']:.4e} e_fp={r['e_fp']:.4e} c_n={r['c_n']:.4e} iters={r['iters']}")


def _cmd_sweep(cfg):
    report = harness.run_convergence_sweep(cfg)
    _print_rows(report)
    harness.write_outputs(cfg, "sweep", report.to_csv(), report.to_json())
    if report.failed:
        raise NumericalFailure(f"{len(report.failed)} sweep entries failed")


def _cmd_hypotheses(cfg):
    report = harness.run_convergence_sweep(cfg)
    rows = harness.run_hypothesis_check(cfg, report)
    for r in rows:
        print(f"n={r['n']} " + " ".join(f"{c}={r[c]:.3e}" for c in harness.HYPOTHESIS_COLUMNS[1:]))
    payload = {"n_ref": report.n_ref, "reference_residual": report.ref_residual, "seed": cfg.seed,
               "notes": harness.REPORT_NOTES, "rows": rows}
    harness.write_outputs(cfg, "hypotheses", harness.table_csv(rows, harness.HYPOTHESIS_COLUMNS), payload)
    if report.failed:
        raise NumericalFailure(f"{len(report.failed)} sweep entries failed")


def _cmd_dispersion(cfg):
    ref = harness.build_reference(cfg)
    est = harness.run_dispersion(cfg, ref)
    rows = [{"n": n, "estimate": e} for n, e in est]
    for r in rows:
        print(f"n={r['n']} dispersion_est={r['estimate']:.4e}")
    payload = {"n_ref": ref.n_ref, "seed": cfg.seed, "samples": cfg.dispersion_samples,
               "note": "lower bound: maximum over finitely many draws", "rows": rows}
    harness.write_outputs(cfg, "dispersion", harness.table_csv(rows, ("n", "estimate")), payload)


COMMANDS = {
    "propagate": _cmd_propagate,
    "fixed-point": _cmd_fixed_point,
    "derivative-check": _cmd_derivative_check,
    "sweep": _cmd_sweep,
    "hypotheses": _cmd_hypotheses,
    "dispersion": _cmd_dispersion,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="faedo", description="Faedo-Galerkin fixed-point experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="config file path, or 'default'")
        p.add_argument("--output", help="override output.directory")
    return parser


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        cfg = harness.load_config(args.config)
        if args.output:
            cfg = cfg.replace(directory=args.output)
        COMMANDS[args.command](cfg)
    except harness.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NonContraction, MaxIterations, NumericalFailure, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
