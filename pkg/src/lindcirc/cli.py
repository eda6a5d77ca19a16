"""Command-line entry point with one subcommand per pipeline step.

Exit codes: 0 success, 2 error bound not met, 3 input error.
"""

import argparse
import json
import os
import sys

from . import formats, pipeline
from .circuit import program_to_text
from .exceptions import LindcircError

EXIT_OK = 0
EXIT_BOUND = 2
EXIT_INPUT = 3


def _read(path):
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def _write(path, text):
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def cmd_compile(args):
    job = formats.parse_jobspec(_read(args.spec))
    program, _ = pipeline.compile_job(job)
    _write(args.output, program_to_text(program))
    if args.output not in (None, "-"):
        print(json.dumps(program.metadata, indent=2))
    return EXIT_OK


def cmd_simulate(args):
    job = formats.parse_jobspec(_read(args.spec))
    overrides = {}
    if args.mode is not None:
        overrides["mode"] = args.mode
    if args.trajectories is not None:
        overrides["trajectories"] = args.trajectories
    if args.seed is not None:
        overrides["seed"] = args.seed
    if overrides:
        job = formats.JobSpec(**{**job.__dict__, **overrides})
    rho0 = formats.parse_state(_read(args.rho))
    rho, report = pipeline.simulate(job, rho0)
    sys.stdout.write(formats.format_state(rho))
    print(json.dumps(report.as_dict(), indent=2))
    return EXIT_OK


def cmd_validate(args):
    job = formats.parse_jobspec(_read(args.spec))
    report = pipeline.validate(job)
    _write(args.json, report.to_json(include_runtime=args.runtime))
    return EXIT_OK if report.bound_satisfied else EXIT_BOUND


def cmd_bench(args):
    grid = formats.parse_grid(_read(args.grid))
    rows = pipeline.bench(grid)
    _write(args.csv, pipeline.bench_csv(rows))
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    """Usage errors are input errors (exit 3); argparse would use 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = _Parser(prog="lindcirc", description="Compile qubit Lindblad evolutions to one-ancilla circuits.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("compile", help="write the circuit program for a job file")
    p.add_argument("spec")
    p.add_argument("-o", "--output", help="circuit file (default: stdout)")
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("simulate", help="run the compiled program on a state")
    p.add_argument("spec")
    p.add_argument("--rho", required=True, help="2x2 density matrix file")
    p.add_argument("--mode", choices=formats.MODES)
    p.add_argument("--trajectories", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("validate", help="compare the program with the exact channel")
    p.add_argument("spec")
    p.add_argument("--json", help="report file (default: stdout)")
    p.add_argument("--runtime", action="store_true", help="include runtime_ms in the report")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("bench", help="cost and error over a (t, eps) grid")
    p.add_argument("grid")
    p.add_argument("--csv", help="output file (default: stdout)")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except BrokenPipeError:
        # downstream reader (e.g. head) closed early; not an input problem
        sys.stdout = open(os.devnull, "w")
        return EXIT_OK
    except (LindcircError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
