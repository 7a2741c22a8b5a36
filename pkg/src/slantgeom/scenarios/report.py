"""Report model and its two serializations.

The machine format is JSON (schema_version 1) with sorted keys inside point
records, floats printed with 17 significant digits and NaN/inf as null.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

SCHEMA_VERSION = 1


@dataclass
class CheckRecord:
    name: str
    kind: str
    passed: bool
    tol: float
    metrics: dict = field(default_factory=dict)
    points: list = field(default_factory=list)
    exclusions: list = field(default_factory=list)
    note: str = ""


@dataclass
class Report:
    scenario: str
    engine_version: str
    tolerances: dict
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


# -- machine ----------------------------------------------------------------------------


def _num(v: float) -> str:
    if not math.isfinite(v):
        return "null"
    if v == 0.0:
        return "0.0" if math.copysign(1.0, v) > 0 else "-0.0"
    s = "%.17g" % v
    if "e" not in s and "." not in s and "inf" not in s:
        s += ".0"
    return s


def _str(s: str) -> str:
    out = ['"']
    for ch in s:
        if ch == '"':
            out.append('\\"')
        elif ch == "\\":
            out.append("\\\\")
        elif ch == "\n":
            out.append("\\n")
        elif ord(ch) < 0x20:
            out.append("\\u%04x" % ord(ch))
        else:
            out.append(ch)
    out.append('"')
    return "".join(out)


def _json(v, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if v is None:
        return "null"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return _num(v)
    if isinstance(v, str):
        return _str(v)
    if isinstance(v, dict):
        if not v:
            return "{}"
        items = [f"{pad}{_str(str(k))}: {_json(x, indent, level + 1)}" for k, x in v.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(v, (list, tuple)):
        if not v:
            return "[]"
        if all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
            return "[" + ", ".join(_json(x, indent, level) for x in v) + "]"
        return "[\n" + ",\n".join(pad + _json(x, indent, level + 1) for x in v) + "\n" + end + "]"
    if hasattr(v, "item"):
        return _json(v.item(), indent, level)
    raise TypeError(f"cannot serialize {type(v).__name__}")


def to_machine(r: Report) -> str:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "scenario": r.scenario,
        "engine_version": r.engine_version,
        "tolerances": dict(sorted(r.tolerances.items())),
        "passed": r.passed,
        "checks": [
            {
                "name": c.name,
                "kind": c.kind,
                "passed": c.passed,
                "tol": c.tol,
                "note": c.note,
                "metrics": dict(sorted(c.metrics.items())),
                "points": [dict(sorted(p.items())) for p in c.points],
                "exclusions": [{"point": e["point"], "reason": e["reason"]} for e in c.exclusions],
            }
            for c in r.checks
        ],
    }
    return _json(doc, 2, 0) + "\n"


# -- human ------------------------------------------------------------------------------


def _cell(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, bool):
        return "yes" if v else "no"
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.10g}"
    if isinstance(v, (list, tuple)):
        return "(" + ", ".join(_cell(x) for x in v) + ")"
    return str(v)


def _table(rows: list[list[str]]) -> list[str]:
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    out = []
    for j, r in enumerate(rows):
        out.append("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip())
        if j == 0:
            out.append("  ".join("-" * w for w in widths))
    return out


def to_human(r: Report) -> str:
    lines = [f"scenario: {r.scenario}", f"engine:   slantgeom {r.engine_version}",
             "tolerances: " + ", ".join(f"{k}={_cell(v)}" for k, v in sorted(r.tolerances.items())), ""]
    if r.checks:
        rows = [["check", "kind", "result", "tol", "points", "excluded"]]
        for c in r.checks:
            rows.append([c.name, c.kind, "PASS" if c.passed else "FAIL", f"{c.tol:.3g}", str(len(c.points)),
                         str(len(c.exclusions))])
        lines += _table(rows)
    else:
        lines.append("(no checks)")
    for c in r.checks:
        lines += ["", f"[{c.name}] {c.kind}: {'PASS' if c.passed else 'FAIL'}" + (f"  ({c.note})" if c.note else "")]
        if c.metrics:
            lines += _table([["metric", "value"]] + [[k, _cell(v)] for k, v in sorted(c.metrics.items())])
        if c.points:
            cols = sorted({k for p in c.points for k in p} - {"param"})
            rows = [["param"] + cols] + [[_cell(p.get("param"))] + [_cell(p.get(k)) for k in cols] for p in c.points]
            lines.append("")
            lines += _table(rows)
        for e in c.exclusions:
            lines.append(f"  excluded {_cell(e['point'])}: {e['reason']}")
    lines.append("")
    lines.append(f"overall: {'PASS' if r.passed else 'FAIL'}")
    return "\n".join(lines) + "\n"


def emit_report(r: Report, fmt: str = "human") -> bytes:
    if fmt == "machine":
        return to_machine(r).encode("utf-8")
    if fmt == "human":
        return to_human(r).encode("utf-8")
    raise ValueError(f"unknown report format {fmt!r}")
