"""Command line entry point: ``rwde <experiment> --config FILE [--seed N] [--threads N] [--out DIR]``.

Exit status 0 when every verdict passes, 2 when some statistical verdict
fails, 1 on usage or configuration errors.
"""

from __future__ import annotations

import argparse
import sys

from rwde.config import load_config
from rwde.experiments import EXPERIMENTS

EXIT_PASS, EXIT_ERROR, EXIT_FAIL = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rwde", description="Monte Carlo checks for random walks in Dirichlet environments.")
    sub = parser.add_subparsers(dest="experiment", metavar="EXPERIMENT", parser_class=_Parser)
    sub.required = True
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", required=True, help="experiment configuration (INI, schema = 1)")
        p.add_argument("--seed", type=int, help="override master_seed")
        p.add_argument("--threads", type=int, help="worker processes (results do not depend on it)")
        p.add_argument("--out", default=".", help="output directory (default: current)")
        if name == "reversal-test":
            p.add_argument("--graph", help="edge-list file, overriding the config's graph key")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, master_seed=args.seed, threads=args.threads)
        run = EXPERIMENTS[args.experiment]
        if args.experiment == "reversal-test" and args.graph:
            result = run(cfg, graph=args.graph)
        else:
            result = run(cfg)
    except (OSError, ValueError) as exc:  # config, graph, domain and precondition errors
        print(f"rwde: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    paths = result.write(args.out)
    for w in result.warnings:
        print(f"warning: {w}", file=sys.stderr)
    for v in result.verdicts:
        print(f"{'PASS' if v.passed else 'FAIL'}  {v.name}: {v.value}  ({v.rule})")
    print(f"wrote {paths['csv']} and {paths['summary']}")
    return EXIT_PASS if result.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
