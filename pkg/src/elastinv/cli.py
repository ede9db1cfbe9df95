"""Command line entry point.

Three commands cover the pipeline: ``forward`` synthesizes measurement
matrices, ``reconstruct`` runs one of the three inversion methods, and
``experiment noise-sweep`` reruns the reconstructions over a fixed ladder
of noise levels.  All commands read one TOML run configuration; specific
flags override file values.  Exit codes: 0 success, 2 invalid input,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys

from .config import load_config
from .errors import (
    EXIT_INVALID_ARGUMENT,
    EXIT_NUMERICAL_FAILURE,
    EXIT_OK,
    InvalidArgumentError,
    NumericalFailureError,
)
from .pipeline import (
    run_forward,
    run_monreg_pipeline,
    run_montest_pipeline,
    run_noise_sweep,
    run_onestep_pipeline,
)

METHODS = ("onestep", "monreg", "montest")


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="TOML", help="run configuration file")
    parser.add_argument("--out", metavar="DIR", help="output directory (overrides output.dir)")
    parser.add_argument("--eta", type=float, help="relative noise level (overrides noise.eta)")
    parser.add_argument("--seed", type=int, help="noise seed (overrides noise.seed)")
    parser.add_argument(
        "--emit-vtk", action="store_true", default=None, help="also write VTK dumps"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="elastinv",
        description="Reconstruct stiff inclusions in an elastic block from "
        "boundary force-displacement measurements.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    fwd = sub.add_parser("forward", help="synthesize measurement matrices")
    _add_common(fwd)

    rec = sub.add_parser("reconstruct", help="run one reconstruction method")
    _add_common(rec)
    rec.add_argument("--method", choices=METHODS, required=True)
    rec.add_argument("--omega", type=float, help="onestep: volumetric damping weight")
    rec.add_argument("--sigma", type=float, help="onestep: shear damping weight")
    rec.add_argument(
        "--bounds",
        type=float,
        nargs=4,
        metavar=("LAM_LO", "LAM_HI", "MU_LO", "MU_HI"),
        help="monreg: a priori contrast bounds",
    )
    rec.add_argument("--sign-case", choices=("stiffer", "softer"), help="monreg: contrast sign")
    rec.add_argument(
        "--delta",
        type=float,
        help="monreg/montest: override the noise shift used by the constraints",
    )
    rec.add_argument("--alpha-lambda", type=float, help="montest: volumetric test weight")
    rec.add_argument("--alpha-mu", type=float, help="montest: shear test weight")

    exp = sub.add_parser("experiment", help="multi-run experiments")
    exp_sub = exp.add_subparsers(dest="experiment", required=True)
    sweep = exp_sub.add_parser("noise-sweep", help="reconstructions over a noise ladder")
    _add_common(sweep)

    return parser


def _config_from_args(args) -> "RunConfig":
    overrides = {
        "output.dir": args.out,
        "noise.eta": args.eta,
        "noise.seed": args.seed,
        "output.emit_vtk": args.emit_vtk,
    }
    if getattr(args, "bounds", None) is not None:
        lam_lo, lam_hi, mu_lo, mu_hi = args.bounds
        overrides.update(
            {
                "bounds.lam_lo": lam_lo,
                "bounds.lam_hi": lam_hi,
                "bounds.mu_lo": mu_lo,
                "bounds.mu_hi": mu_hi,
            }
        )
    if getattr(args, "sign_case", None) is not None:
        overrides["bounds.sign_case"] = args.sign_case
    if getattr(args, "omega", None) is not None:
        overrides["onestep.omega"] = args.omega
    if getattr(args, "sigma", None) is not None:
        overrides["onestep.sigma"] = args.sigma
    if getattr(args, "alpha_lambda", None) is not None:
        overrides["montest.alpha_lam"] = args.alpha_lambda
    if getattr(args, "alpha_mu", None) is not None:
        overrides["montest.alpha_mu"] = args.alpha_mu
    return load_config(args.config, overrides)


def _cmd_forward(args) -> int:
    config = _config_from_args(args)
    _, delta = run_forward(config, out_dir=config.output.dir)
    print(f"wrote measurement matrices to {config.output.dir} (delta={delta:g})")
    return EXIT_OK


def _cmd_reconstruct(args) -> int:
    config = _config_from_args(args)
    out = config.output.dir
    if args.method == "onestep":
        result = run_onestep_pipeline(config, out_dir=out)
        print(
            f"onestep: residual {result.residual_norm:.6g}, "
            f"max nu {abs(result.nu).max():.6g}, wrote {out}"
        )
    elif args.method == "monreg":
        result = run_monreg_pipeline(config, out_dir=out, delta_override=args.delta)
        print(
            f"monreg: residual {result.residual_fro:.6g}, "
            f"{result.iterations} iterations, "
            f"max nu {abs(result.nu).max():.6g}, wrote {out}"
        )
    else:
        flags = run_montest_pipeline(
            config,
            out_dir=out,
            alpha_lam=args.alpha_lambda,
            alpha_mu=args.alpha_mu,
            delta_override=args.delta,
        )
        print(f"montest: {int(flags.sum())}/{flags.size} pixels flagged, wrote {out}")
    return EXIT_OK


def _cmd_noise_sweep(args) -> int:
    config = _config_from_args(args)
    rows = run_noise_sweep(config, out_dir=config.output.dir)
    print("eta      delta         monreg_misclassified  onestep_misclassified")
    for row in rows:
        print(
            f"{row['eta']:<8g} {row['delta']:<13.6g} "
            f"{row['monreg_misclassified']:<21d} {row['onestep_misclassified']:d}"
        )
    print(f"wrote {config.output.dir}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "forward":
            return _cmd_forward(args)
        if args.command == "reconstruct":
            return _cmd_reconstruct(args)
        return _cmd_noise_sweep(args)
    except InvalidArgumentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID_ARGUMENT
    except NumericalFailureError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL_FAILURE


if __name__ == "__main__":
    sys.exit(main())
