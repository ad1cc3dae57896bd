"""Command-line front end.

Subcommands: sample, reduce, validity, moments, optimize, reconstruct,
export-mesh, report.  Exit codes: 0 ok, 2 usage error, 3 missing stage,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import PROFILES, resolve_config
from .pipeline import (
    MissingStageError,
    PipelineError,
    RunDir,
    UsageError,
    cmd_export_mesh,
    cmd_moments_report,
    cmd_optimize,
    cmd_reconstruct,
    cmd_reduce,
    cmd_report,
    cmd_sample,
    cmd_validity,
)


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="propspace",
        description="Design-subspace construction and shape optimization for propeller blades",
    )
    parser.add_argument("--config", help="JSON config overriding the profile defaults")
    parser.add_argument("--run-dir", default="runs/default", help="pipeline working directory")
    parser.add_argument("--seed", type=int, help="override sampling/validity/optimizer seeds")
    parser.add_argument("--profile", default="paper", choices=sorted(PROFILES))
    parser.add_argument("--threads", type=int, default=1, help="worker processes inside stages")
    parser.add_argument("--force", action="store_true", help="recompute completed stages")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="draw the design-space training samples")
    p.add_argument("--psi", type=int, help="override training sample count")

    p = sub.add_parser("reduce", help="build a reduced subspace from the samples")
    p.add_argument("--mode", choices=("ssdr", "kle"), required=True)

    sub.add_parser("validity", help="compare invalid-design fractions of both subspaces")

    p = sub.add_parser("moments", help="geometric moments of a mesh or the baseline blade")
    p.add_argument("--mesh", help="OBJ/STL file (default: the closed baseline blade)")
    p.add_argument("--order", type=int, default=3)
    p.add_argument("--out", help="write the JSON here instead of stdout")

    p = sub.add_parser("optimize", help="run the constrained two-objective GA")
    p.add_argument("--space", choices=("full", "ssdr", "kle"), required=True)

    p = sub.add_parser("reconstruct", help="decode a latent vector to a blade OBJ")
    p.add_argument("--mode", choices=("ssdr", "kle"), default="ssdr")
    p.add_argument("--latent", help="comma-separated latent coordinates (default: the mean blade)")
    p.add_argument("--out", help="output path relative to the run dir")

    p = sub.add_parser("export-mesh", help="export a design's surface as OBJ or STL")
    p.add_argument("--t", help="comma-separated design vector (default: baseline)")
    p.add_argument("--out", required=True, help="output path (.obj or .stl)")

    sub.add_parser("report", help="aggregate run artifacts into report.json/.txt")
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        config = resolve_config(args.config, args.profile, args.seed)
        if args.command == "sample" and args.psi is not None and args.psi < 1:
            raise UsageError("--psi must be at least 1")

        if args.command == "moments":
            text = cmd_moments_report(config, args.mesh, args.order)
            if args.out:
                from .pipeline import atomic_write_text

                atomic_write_text(Path(args.out), text + "\n")
            else:
                print(text)
            return 0
        if args.command == "export-mesh":
            t = [float(x) for x in args.t.split(",")] if args.t else None
            out = cmd_export_mesh(config, args.out, t)
            print(f"wrote {out}")
            return 0

        run = RunDir(args.run_dir, config)
        if args.command == "sample":
            out = cmd_sample(run, force=args.force, count_override=args.psi)
            print(f"samples at {out}")
        elif args.command == "reduce":
            out = cmd_reduce(run, args.mode, force=args.force, threads=args.threads)
            print(f"subspace at {out}")
        elif args.command == "validity":
            summary = cmd_validity(run, force=args.force)
            verdict = "holds" if summary["ssdr_not_worse"] else "VIOLATED"
            print(
                f"invalid %: ssdr {summary['ssdr']['mean_pct']:.4f} +- {summary['ssdr']['std_pct']:.4f}, "
                f"kle {summary['kle']['mean_pct']:.4f} +- {summary['kle']['std_pct']:.4f}; "
                f"ssdr <= kle {verdict}"
            )
        elif args.command == "optimize":
            summary = cmd_optimize(run, args.space, force=args.force, threads=args.threads)
            print(
                f"front {summary['front_size']} designs, best eta {summary['best_eta']}, "
                f"min A_back {summary['min_a_back']} ({summary['evaluations']} evaluations)"
            )
        elif args.command == "reconstruct":
            latent = [float(x) for x in args.latent.split(",")] if args.latent else None
            out = cmd_reconstruct(run, args.mode, latent, args.out)
            print(f"wrote {out}")
        elif args.command == "report":
            cmd_report(run)
        return 0
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except MissingStageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
