"""Command line entry point: ``slantgeom run|example|check-structure``."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .. import __version__
from .. import numkit as nk
from .config import ScenarioError, apply_grid_override, load_scenario
from .report import Report, emit_report
from .runner import BUILTINS, load_builtin, run_scenario

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

_ENGINE_TOLS = {"STRUCT_TOL": "struct", "SPECTRAL_TOL": "spectral", "FD_TOL": "fd"}
_STRUCTURE_KINDS = ("almost_hermitian", "anticommute", "decomposition", "nijenhuis", "nabla_family")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("human", "machine"), default="human")
    common.add_argument("--grid", action="append", default=[], metavar="AXIS=min:max:steps",
                        help="override a lattice axis, e.g. x1=-1:1:9 or main.x2=0:1:3")
    common.add_argument("--tol", action="append", default=[], metavar="NAME=value",
                        help="STRUCT_TOL, SPECTRAL_TOL, FD_TOL or a check name")
    common.add_argument("--out", metavar="PATH", help="write the report here instead of stdout")
    common.add_argument("--workers", type=int, default=1, help="threads for per-point work")

    p = _Parser(prog="slantgeom", description="Pointwise slant analysis of immersed submanifolds.")
    p.add_argument("--version", action="version", version=f"slantgeom {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    r = sub.add_parser("run", parents=[common], help="run every check in a scenario file")
    r.add_argument("scenario")
    e = sub.add_parser("example", parents=[common], help="run a bundled worked example")
    e.add_argument("name", choices=sorted(BUILTINS))
    s = sub.add_parser("check-structure", parents=[common], help="run only the structure checks of a scenario")
    s.add_argument("scenario")
    return p


def _split_tols(items):
    engine, checks = {}, {}
    for item in items:
        name, sep, val = item.partition("=")
        if not sep:
            raise ScenarioError("--tol", f"expected NAME=value, got {item!r}")
        try:
            v = float(val)
        except ValueError:
            raise ScenarioError("--tol", f"{val!r} is not a number") from None
        if not v > 0:
            raise ScenarioError("--tol", f"{name} must be positive")
        if name in _ENGINE_TOLS:
            engine[_ENGINE_TOLS[name]] = v
        else:
            checks[name] = v
    return replace(nk.DEFAULT_TOL, **engine), checks


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        tol, check_tols = _split_tols(args.tol)
        cfg = load_builtin(args.name) if args.command == "example" else load_scenario(args.scenario)
        for g in args.grid:
            apply_grid_override(cfg, g)
        if args.command == "check-structure":
            cfg.checks = [c for c in cfg.checks if c.kind in _STRUCTURE_KINDS]
            check_tols = {k: v for k, v in check_tols.items() if k in {c.name for c in cfg.checks}}
        report: Report = run_scenario(cfg, tol, check_tols, max(1, args.workers))
    except ScenarioError as exc:
        print(f"slantgeom: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    data = emit_report(report, args.format)
    if args.out:
        try:
            with open(args.out, "wb") as fh:
                fh.write(data)
        except OSError as exc:
            print(f"slantgeom: cannot write {args.out}: {exc.strerror}", file=sys.stderr)
            return EXIT_USAGE
    else:
        sys.stdout.buffer.write(data)
        sys.stdout.flush()
    return EXIT_OK if report.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
