"""Command line entry point ``gml``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .pipeline import JobSpec, default_threads, parse_point, run_pipeline

EXIT_USAGE = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _nonnegative(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError("must be a non-negative integer")
    return v


def _point(text: str) -> str:
    try:
        parse_point(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    return text


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="seed for all sampling (default 0)")
    common.add_argument("--threads", type=_positive, default=argparse.SUPPRESS,
                        help="worker processes (default $GML_THREADS or 1)")
    common.add_argument("--out", type=Path, default=argparse.SUPPRESS, help="write the JSON report here")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    p = _Parser(prog="gml", parents=[common],
                description="Landau singularities and differential equations of small Feynman diagrams.")
    p.add_argument("--version", action="version", version=f"gml {__version__}")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def graph_cmd(name, help_):
        c = sub.add_parser(name, parents=[common], help=help_)
        c.add_argument("graph", help="graph JSON file or catalog name")
        return c

    c = graph_cmd("landau", "Landau polynomials of a graph")
    c.add_argument("--second-type", choices=("on", "off", "both"), default="off")
    c.add_argument("--trials", type=_positive, default=20)

    c = graph_cmd("connection", "IBP reduction and the connection matrices")
    c.add_argument("--seed-sum", type=_positive)
    c.add_argument("--rules-cap", type=_nonnegative, default=50)

    for name, help_ in (("verify", "check poles, flatness, infinity and numerics"),
                        ("pipeline", "Landau set, connection and all checks")):
        c = graph_cmd(name, help_)
        c.add_argument("--lines", type=_positive, default=10)
        c.add_argument("--numeric", type=_point, help="point such as s=-1,m1sq=1,m2sq=2,d=3")
        c.add_argument("--second-type", choices=("on", "off", "both"), default="both")
        c.add_argument("--trials", type=_positive, default=20)
        c.add_argument("--seed-sum", type=_positive)
        c.add_argument("--rules-cap", type=_nonnegative, default=50)

    c = sub.add_parser("ansatz", parents=[common], help="flat connections with a prescribed divisor")
    c.add_argument("--divisor", required=True, help='polynomials separated by ";", e.g. "z1;z2;z1-z2"')
    c.add_argument("--vars", required=True, help='variables separated by ",", e.g. "z1,z2"')
    c.add_argument("--size", type=_positive, default=1)
    c.add_argument("--degree", type=_nonnegative, default=0)
    c.add_argument("--triangular", action="store_true")
    c.add_argument("--no-regularity", action="store_true", help="drop the conditions at infinity")
    c.add_argument("--lines", type=_positive, default=10)
    return p


def job_from_args(args) -> JobSpec:
    cmd = args.command
    if cmd == "ansatz":
        inputs = {"divisor": args.divisor, "vars": args.vars, "size": args.size, "degree": args.degree,
                  "triangular": args.triangular, "regularity": not args.no_regularity}
        limits = {"lines": args.lines}
    else:
        inputs = {"graph": args.graph}
        limits = {}
        if cmd in ("landau", "verify", "pipeline"):
            inputs["second_type"] = args.second_type
            limits["trials"] = args.trials
        if cmd in ("connection", "verify", "pipeline"):
            limits["seed_sum"] = args.seed_sum
            limits["rules_cap"] = args.rules_cap
        if cmd in ("verify", "pipeline"):
            limits["lines"] = args.lines
            inputs["numeric"] = args.numeric
    return JobSpec(cmd, inputs, getattr(args, "seed", 0), limits, getattr(args, "threads", default_threads()))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    report = run_pipeline(job_from_args(args))
    text = report.dumps()
    out = getattr(args, "out", None)
    if out is not None:
        try:
            out.write_text(text)
        except OSError as exc:
            print(f"gml: cannot write {out}: {exc}", file=sys.stderr)
            return EXIT_USAGE
    else:
        sys.stdout.write(text)
    for e in report.errors:
        print(f"gml: {e['stage']}: [{e['code']}] {e['message']}", file=sys.stderr)
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
