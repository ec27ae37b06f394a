"""Command-line entry point: ``goldstone-gd {spectrum,bench,align,oracle,neighbors}``.

Exit codes: 0 success, 2 config error, 3 run error.
"""
import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .experiment import DEFAULT_ALIGN, DEFAULT_BENCH, ConfigError, ExperimentSpec, run_experiment, spectrum_payload

EXIT_OK, EXIT_CONFIG, EXIT_RUN = 0, 2, 3


def _emit(payload, out):
    text = json.dumps(payload, indent=2)
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


def _load_spec(args, default):
    spec = ExperimentSpec.from_json(args.config) if args.config else ExperimentSpec.from_dict(default)
    if args.seed is not None:
        spec = spec.with_seed(args.seed)
    return spec


def cmd_spectrum(args):
    payloads = []
    for T in args.T:
        if T < 2 or not args.lam > 0:
            raise ConfigError("spectrum needs T >= 2 and lam > 0")
        payloads.append(spectrum_payload(T, args.lam))
    _emit(payloads[0] if len(payloads) == 1 else payloads, args.out)
    return EXIT_OK


def _bundle(args, default):
    spec = _load_spec(args, default)
    formats = (args.format,) if args.format else ("csv", "json")
    manifest = run_experiment(spec, out_dir=args.out, formats=formats)
    summary = {"runs": manifest["runs"], "comparison": manifest["comparison"], "errors": manifest["errors"]}
    print(json.dumps(summary, indent=2))
    return manifest["exit_code"]


def cmd_bench(args):
    return _bundle(args, DEFAULT_BENCH)


def cmd_align(args):
    return _bundle(args, DEFAULT_ALIGN)


def cmd_oracle(args):
    from .oracle import run_oracle_suite

    result = run_oracle_suite(instances=args.instances, seed=args.seed or 0, tolerance=args.tolerance,
                              drift=args.drift, max_amplitude=args.max_amplitude)
    _emit(result, args.out)
    return EXIT_OK if result["passed"] else EXIT_RUN


def cmd_neighbors(args):
    Z = np.load(args.embeddings)
    if Z.ndim != 3 or not 0 <= args.column < Z.shape[2]:
        raise ConfigError(f"column {args.column} out of range for embeddings of shape {Z.shape}")
    query = Z[-1][:, args.column]
    first = Z[0]
    sims = first.T @ query / (np.linalg.norm(first, axis=0) * np.linalg.norm(query) + 1e-300)
    order = np.argsort(-sims, kind="stable")[: args.k]
    _emit({"column": args.column, "neighbors": [{"column": int(i), "cosine": float(sims[i])} for i in order]},
          None)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="goldstone-gd", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spectrum", help="analytic vs numeric spring-chain Hessian spectrum")
    p.add_argument("--T", type=int, nargs="+", default=[32])
    p.add_argument("--lam", type=float, default=1.0)
    p.add_argument("--out", help="write JSON here instead of stdout")
    p.set_defaults(func=cmd_spectrum)

    for name, func, helptext in (
        ("bench", cmd_bench, "plain GD vs Goldstone-GD benchmark bundle"),
        ("align", cmd_align, "first-vs-last frame alignment experiment (static-meaning sequence)"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", help="JSON experiment spec (defaults to the built-in spec)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="override problem seed (init seed becomes seed + 1)")
        p.add_argument("--format", choices=("csv", "json"), help="trace format (default: both)")
        p.set_defaults(func=func)

    p = sub.add_parser("oracle", help="direct gauge solve vs brute-force minimization on small instances")
    p.add_argument("--instances", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--drift", type=float, default=0.05)
    p.add_argument("--max-amplitude", type=float, default=0.1)
    p.add_argument("--out", help="write JSON here instead of stdout")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("neighbors", help="nearest first-frame columns to a last-frame column (demo)")
    p.add_argument("--embeddings", required=True, help="final_embeddings.npy from a bundle")
    p.add_argument("--column", type=int, required=True)
    p.add_argument("--k", type=int, default=5)
    p.set_defaults(func=cmd_neighbors)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        print(f"run error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUN


if __name__ == "__main__":
    sys.exit(main())
