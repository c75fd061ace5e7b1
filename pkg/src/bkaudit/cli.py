"""Command-line entry point.

Exit codes: 0 all golden values pass, 1 computational error or golden
mismatch, 2 usage or validation error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .errors import AuditError, ValidationError
from .scenarios import AuditReport, Scenario, get, registry, run, sweep

__all__ = ["main", "EXIT_OK", "EXIT_FAIL", "EXIT_USAGE"]

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
FORMATS = ("text", "json", "csv")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, list):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    if v is None:
        return "-"
    return str(v)


def _render(report: AuditReport, fmt: str, include_time: bool) -> str:
    if fmt == "json":
        return report.to_json(include_time)
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["name", "observed", "expected", "delta", "tol", "status"])
        for c in report.comparisons:
            w.writerow([c.name, _fmt(c.observed), _fmt(c.expected), _fmt(c.delta), _fmt(c.tol), "PASS" if c.passed else "FAIL"])
        for r in report.errors:
            w.writerow([r["name"], "", "", "", "", f"ERROR {r['error']}"])
        return buf.getvalue()
    lines = [f"scenario: {report.scenario_id}", f"seed: {report.seed}"]
    for r in report.results:
        if r["error"] is not None:
            lines.append(f"error: {r['name']}: {r['error']}")
    for v in report.verdicts:
        lines.append(f"verdict: {v['name']} {v['verdict']}")
    for c in report.comparisons:
        tol = _fmt(c.tol) if c.cmp == "eq" else {"gt": ">", "lt": "<"}[c.cmp]
        lines.append(f"{c.name}: {_fmt(c.observed)} {_fmt(c.expected)} {_fmt(c.delta)} {tol} {'PASS' if c.passed else 'FAIL'}")
    if include_time:
        lines.append(f"wall_time: {report.wall_time:.3f}")
    lines.append(f"result: {'PASS' if report.passed else 'FAIL'}")
    return "\n".join(lines) + "\n"


def _emit(report: AuditReport, args) -> int:
    sys.stdout.write(_render(report, args.format, args.time))
    return EXIT_OK if report.passed else EXIT_FAIL


def _check_threads() -> Optional[str]:
    raw = os.environ.get("AUDIT_THREADS")
    if raw is None:
        return None
    try:
        n = int(raw)
    except ValueError:
        return f"AUDIT_THREADS must be a positive integer, got {raw!r}"
    return None if n >= 1 else f"AUDIT_THREADS must be a positive integer, got {raw!r}"


def _parse_range(text: str) -> tuple[float, float]:
    lo, sep, hi = text.partition("..")
    if not sep:
        raise ValueError(f"range must look like LO..HI, got {text!r}")
    return float(lo), float(hi)


def _cmd_reproduce(args) -> int:
    try:
        s = get(args.case_id)
    except KeyError:
        print(f"unknown case {args.case_id!r}; see 'audit list'", file=sys.stderr)
        return EXIT_USAGE
    return _emit(run(s, args.seed, args.tol_scale), args)


def _cmd_run(args) -> int:
    try:
        text = Path(args.path).read_text(encoding="utf-8")
    except OSError as exc:
        print(f"cannot read {args.path}: {exc.strerror}", file=sys.stderr)
        return EXIT_USAGE
    try:
        s = Scenario.from_json(text)
        report = run(s, args.seed, args.tol_scale)
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return _emit(report, args)


def _cmd_list(args) -> int:
    scenarios = registry()
    if args.export:
        out = Path(args.export)
        out.mkdir(parents=True, exist_ok=True)
        for s in scenarios:
            (out / (s.id.replace(":", "_") + ".json")).write_text(s.to_json(), encoding="utf-8")
    if args.format == "json":
        sys.stdout.write(json.dumps([{"id": s.id, "description": s.description} for s in scenarios], indent=2) + "\n")
    else:
        for s in scenarios:
            sweeps = ",".join(sorted(s.sweeps))
            sys.stdout.write(f"{s.id}\t{s.description}" + (f"\t[sweep: {sweeps}]" if sweeps else "") + "\n")
    return EXIT_OK


def _cmd_profile(args) -> int:
    try:
        s = get(args.case_id)
    except KeyError:
        print(f"unknown case {args.case_id!r}", file=sys.stderr)
        return EXIT_USAGE
    try:
        lo, hi = _parse_range(args.range)
        rows = sweep(s, args.param, lo, hi, args.steps)
    except (ValueError, ValidationError) as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except (AuditError, ArithmeticError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    if args.format == "json":
        payload = [{"param": x, "value": v, "err_est": e} for x, v, e in rows]
        sys.stdout.write(json.dumps(payload, indent=2) + "\n")
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["param", "value", "err_est"])
        for x, v, e in rows:
            w.writerow([repr(x), repr(v), repr(e)])
        sys.stdout.write(buf.getvalue())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="audit", description="Reparameterization audits for Bayesian inversion.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, default_format="text"):
        sp.add_argument("--format", choices=FORMATS, default=default_format)
        sp.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        sp.add_argument("--tol-scale", type=float, default=1.0, help="multiply every golden tolerance")
        sp.add_argument("--time", action="store_true", help="include wall time in the report")

    sp = sub.add_parser("reproduce", help="run a built-in scenario and compare golden values")
    sp.add_argument("case_id")
    common(sp)
    sp.set_defaults(func=_cmd_reproduce)

    sp = sub.add_parser("run", help="run a scenario file")
    sp.add_argument("path")
    common(sp)
    sp.set_defaults(func=_cmd_run)

    sp = sub.add_parser("list", help="list built-in scenarios")
    sp.add_argument("--format", choices=FORMATS, default="text")
    sp.add_argument("--export", metavar="DIR", help="also write each scenario as a JSON file into DIR")
    sp.set_defaults(func=_cmd_list)

    sp = sub.add_parser("profile", help="sweep a scenario parameter and emit CSV")
    sp.add_argument("case_id")
    sp.add_argument("param")
    sp.add_argument("range", metavar="LO..HI")
    sp.add_argument("steps", type=int)
    sp.add_argument("--format", choices=FORMATS, default="csv")
    sp.set_defaults(func=_cmd_profile)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    problem = _check_threads()
    if problem:
        print(problem, file=sys.stderr)
        return EXIT_USAGE
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
