"""Command-line entry point: run experiments, spectral diagnostics, or the
reference solver from a JSON config.

Exit code 0 on success; failures print one machine-readable JSON error line
to stderr and exit 1.
"""

import argparse
import json
import os
import sys

import numpy as np

from .. import diag
from .experiment import ExperimentConfig, prepare_model, run_experiment
from .reference import reference_minimum


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="sketchyglm",
        description="Benchmark harness for preconditioned stochastic GLM solvers",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("run", "run every configured optimizer and write CSV metrics"),
        ("diag", "write a spectral report (singular values, effective "
                 "dimension, leverage scores, coherence)"),
        ("solve-ref", "compute and store the reference minimum"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", help="path to a JSON experiment config")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--output", default=None,
                       help="override the config output directory")
    return parser


def _load_config(args):
    config = ExperimentConfig.from_json(args.config)
    if args.seed is not None:
        config.seed = args.seed
    if args.output is not None:
        config.output_dir = args.output
    return config


def _cmd_run(args):
    config = _load_config(args)
    results = run_experiment(config)
    for label, (path, _) in sorted(results.items()):
        print(f"{label}: {path}")
    return 0


def _cmd_diag(args):
    config = _load_config(args)
    model = prepare_model(config)
    A = model.dataset.A
    report = diag.spectrum_report(A, model.nu)
    os.makedirs(config.output_dir, exist_ok=True)
    path = os.path.join(config.output_dir, "spectrum.csv")
    diag.write_spectrum_csv(report, path)
    print(f"spectrum: {path}")
    return 0


def _cmd_solve_ref(args):
    config = _load_config(args)
    model = prepare_model(config)
    ref = reference_minimum(model)
    os.makedirs(config.output_dir, exist_ok=True)
    path = os.path.join(config.output_dir, "reference.json")
    with open(path, "w") as fh:
        json.dump(
            {
                "f_star": ref.f_star,
                "grad_norm": ref.grad_norm,
                "method": ref.method,
                "w": np.asarray(ref.w).tolist(),
            },
            fh,
        )
    print(f"reference: {path}")
    return 0


_COMMANDS = {"run": _cmd_run, "diag": _cmd_diag, "solve-ref": _cmd_solve_ref}


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except Exception as exc:  # noqa: BLE001 - single reporting point
        print(
            json.dumps({"error": type(exc).__name__, "message": str(exc)}),
            file=sys.stderr,
        )
        return 1


if __name__ == "__main__":
    sys.exit(main())
