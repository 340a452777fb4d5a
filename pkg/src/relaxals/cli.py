"""Command-line runner: ``relax-als <experiment> [options]``."""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys

from . import oracle as _oracle
from .exceptions import RelaxALSError
from .experiments import (EXPERIMENTS, ExperimentConfig, run_completion,
                          run_lyapunov, run_oracle, run_qtt)

EXIT_CONVERGED, EXIT_ERROR, EXIT_MAX_ITERS = 0, 1, 2

RUNNERS = {"completion": run_completion, "lyapunov": run_lyapunov, "qtt": run_qtt}


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with 1; exit code 2 is reserved for an exhausted iteration budget."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _omega(text):
    if text == "auto":
        return text
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError("omega must be a float or 'auto'")


def build_parser():
    p = _Parser(
        prog="relax-als",
        description="Alternating least squares with overrelaxation: experiment runner.")
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--n", type=int, help="matrix size (default per experiment)")
    p.add_argument("--m", type=int, help="row count (oracle / completion, defaults to n)")
    p.add_argument("--k", type=int, help="rank (TT rank for qtt)")
    p.add_argument("--os", dest="OS", type=float, help="oversampling factor (completion)")
    p.add_argument("--d", type=int, help="number of binary levels per mode (qtt)")
    p.add_argument("--omega", type=_omega, default="auto", help="relaxation weight or 'auto'")
    p.add_argument("--activate-after", dest="activation_iter", type=int,
                   help="iteration at which the shift is switched on")
    p.add_argument("--max-iters", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--identity", action="store_true",
                   help="oracle: identity curvature instead of a random SPD one")
    p.add_argument("--out", dest="output_path", help="output file (default: stdout)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def config_from_args(args):
    extra = {"identity": True} if args.identity else {}
    return ExperimentConfig(
        experiment=args.experiment, n=args.n, m=args.m, k=args.k, d=args.d, OS=args.OS,
        omega=args.omega, activation_iter=args.activation_iter, max_iters=args.max_iters,
        tol=args.tol, seed=args.seed, output_path=args.output_path, format=args.format,
        extra=extra)


def _settings(cfg):
    return {"experiment": cfg.experiment, "n": cfg.n, "m": cfg.m, "k": cfg.k, "d": cfg.d,
            "OS": cfg.OS, "omega": cfg.omega, "activation_iter": cfg.activation_iter,
            "max_iters": cfg.max_iters, "tol": cfg.tol, "seed": cfg.seed}


def _oracle_csv(report):
    buf = io.StringIO()
    cols = ["omega", "rho_measured", "rho_predicted", "beta", "q", "matched"]
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(cols)
    for row in report["grid"]:
        writer.writerow([repr(row[c]) if isinstance(row[c], float) else row[c] for c in cols])
    return buf.getvalue()


def execute(cfg):
    """Run one experiment; returns ``(text, exit_code)``."""
    if cfg.experiment == "oracle":
        report = run_oracle(cfg)
        text = _oracle.report_json(report) + "\n" if cfg.format == "json" else _oracle_csv(report)
        ok = report["all_matched"] and report["argmin_within_grid_step"]
        return text, EXIT_CONVERGED if ok else EXIT_ERROR
    _, trace = RUNNERS[cfg.experiment](cfg)
    if cfg.format == "json":
        text = trace.to_json(settings=_settings(cfg)) + "\n"
    else:
        text = trace.to_csv()
    return text, EXIT_CONVERGED if trace.converged else EXIT_MAX_ITERS


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
        text, code = execute(cfg)
    except (RelaxALSError, ValueError, ArithmeticError, LookupError) as exc:
        print(f"relax-als: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    if cfg.output_path:
        with open(cfg.output_path, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
