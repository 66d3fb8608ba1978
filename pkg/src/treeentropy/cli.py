"""Command line entry point: ``treeentropy <subcommand> [flags]``.

Subcommands: covering, biased, binary-log, gaussian, op-checks, predict.
A JSON config (``--config``) supplies defaults; explicit flags override it.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .experiments import ExperimentConfig, ExperimentError, run_experiment
from .rates import FAMILIES, RateError, predict

_MODES = {
    "covering": "covering",
    "biased": "biased",
    "binary-log": "binary-log",
    "gaussian": "gaussian",
    "op-checks": "operator-checks",
}

# flag dest -> ExperimentConfig field
_FIELDS = {
    "tree": "tree", "lam": "lam", "depth": "depth", "tree_file": "tree_file", "law": "law",
    "gamma": "gamma", "q": "q", "eps_start": "eps_start", "eps_ratio": "eps_ratio",
    "eps_count": "eps_count", "samples": "samples", "seed": "seed", "out": "out",
    "exact_limit": "exact_limit", "c_star": "c_star", "workers": "workers",
    "instances": "instances",
}


def _experiment_flags(p: argparse.ArgumentParser) -> None:
    # defaults stay None so that only flags given on the command line override the config file
    p.add_argument("--config", help="JSON file with ExperimentConfig fields")
    p.add_argument("--tree", choices=["path", "binary", "moderate", "biased", "file"])
    p.add_argument("--tree-file", help="edge list used with --tree file")
    p.add_argument("--lambda", dest="lam", type=float, help="growth exponent of the tree")
    p.add_argument("--depth", type=int)
    p.add_argument("--law", choices=["polynomial", "exponential"])
    p.add_argument("--gamma", type=float)
    p.add_argument("--q", type=float)
    p.add_argument("--eps-start", type=float)
    p.add_argument("--eps-ratio", type=float)
    p.add_argument("--eps-count", type=int)
    p.add_argument("--samples", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output prefix; writes <out>.csv, <out>.json, <out>.dat")
    p.add_argument("--exact-limit", type=int)
    p.add_argument("--c-star", type=float)
    p.add_argument("--workers", type=int)
    p.add_argument("--instances", type=int, help="random instances for op-checks")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="treeentropy", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _MODES:
        _experiment_flags(sub.add_parser(name, help=f"run the {name} experiment"))
    pp = sub.add_parser("predict", help="print predicted covering and entropy exponents")
    pp.add_argument("--family", required=True, choices=FAMILIES)
    pp.add_argument("--q", type=float, required=True)
    pp.add_argument("--gamma", type=float, required=True)
    pp.add_argument("--lambda", dest="lam", type=float, default=0.0)
    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    overrides = {field: getattr(args, dest) for dest, field in _FIELDS.items()}
    overrides["mode"] = _MODES[args.command]
    if args.config:
        return ExperimentConfig.from_json(args.config, **overrides)
    return ExperimentConfig(**{k: v for k, v in overrides.items() if v is not None})


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "predict":
        try:
            pred = predict({"family": args.family, "q": args.q, "gamma": args.gamma,
                            "lam": args.lam})
        except RateError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        print(json.dumps(pred.to_dict(), indent=2))
        return 0
    try:
        cfg = config_from_args(args)
        report = run_experiment(cfg)
    except (ExperimentError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    summary = {k: v.get("status") for k, v in report["verdicts"].items()}
    print(json.dumps({"passed": report["passed"], "verdicts": summary, "files": report["files"]},
                     indent=2))
    return 0 if report["passed"] else 1


if __name__ == "__main__":
    sys.exit(main())
