"""Scenario files: TOML with a version header, validated into ready-to-run objects.

Layout (see README for the full reference)::

    # slantgeom-scenario v1
    name = "example1"

    [ambient]
    dim = 8                      # metric = [[...]] optional, identity by default

    [structures.J1]
    preset = "pair-shift"        # or matrix / conjugate+plane+angle / compose

    [coefficients]
    half = ["1/sqrt(2)", "1/sqrt(2)"]

    [immersions.M]
    domain = 2
    components = ["2*x1", "x1", ...]   # or compose = [outer, inner] / product = [...]

    [fields.X]
    components = ["1", "x1"]

    [grids.main]
    axes = [[-2, 2, 5], [-2, 2, 5]]    # or points = [[...]] / random = {...}

    [[checks]]
    name = "theta1"
    kind = "slant_scan"
    ...
"""

from __future__ import annotations

import itertools
import re
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .. import numkit as nk
from ..immersion import Immersion, compose, immersion_from_components, product_immersion
from ..structures import (
    PRESETS,
    CoefficientFunctions,
    DimensionError,
    MetricSpec,
    NormalizationError,
    TensorField11,
    block_sum,
    composed,
    conjugated,
    plane_rotation,
    standard_complex,
)
from .expr import ExprError, compile_expr, max_symbol, parse_expr

HEADER = "# slantgeom-scenario v1"
FORMAT_VERSION = 1

CHECK_KINDS = {
    # kind: default tolerance
    "almost_hermitian": nk.STRUCT_TOL,
    "anticommute": nk.STRUCT_TOL,
    "slant_scan": 1e-9,
    "cross_term": 1e-9,
    "family_slant": 1e-9,
    "family_slant_k": 1e-9,
    "anti_invariance": 1e-12,
    "transitivity": 1e-12,
    "chain": nk.FD_TOL,
    "induced_structure": nk.STRUCT_TOL,
    "decomposition": nk.FD_TOL,
    "nijenhuis": nk.FD_TOL,
    "nabla_family": nk.FD_TOL,
    "kahler": nk.FD_TOL,
    "product": nk.SPECTRAL_TOL,
}

CLASS_NAMES = ("pointwise-slant-proper", "anti-invariant", "invariant", "not-slant")


class ScenarioError(ValueError):
    """Configuration problem; ``key`` names the offending entry."""

    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}")


@dataclass
class GridSpec:
    name: str
    axes: list | None = None
    points: list | None = None
    random: dict | None = None

    def materialize(self) -> list[np.ndarray]:
        if self.axes is not None:
            lines = [np.linspace(lo, hi, int(n)) for lo, hi, n in self.axes]
            return [np.array(p, dtype=float) for p in itertools.product(*lines)]
        if self.points is not None:
            return [np.array(p, dtype=float) for p in self.points]
        r = self.random
        rng = np.random.default_rng(int(r["seed"]))
        pts = rng.uniform(float(r.get("low", -1.0)), float(r.get("high", 1.0)), size=(int(r["count"]), int(r["dim"])))
        return [p for p in pts]

    @property
    def dim(self) -> int:
        if self.axes is not None:
            return len(self.axes)
        if self.points is not None:
            return len(self.points[0])
        return int(self.random["dim"])


@dataclass
class CheckSpec:
    name: str
    kind: str
    tol: float
    params: dict
    key: str


@dataclass
class ScenarioConfig:
    name: str
    description: str
    ambient_dim: int
    metric: MetricSpec
    structures: dict
    coefficients: dict
    coefficient_text: dict
    immersions: dict
    fields: dict
    grids: dict
    checks: list
    source: str | None = None

    def grid(self, name) -> list[np.ndarray]:
        return self.grids[name].materialize()

    def metric_for(self, dim: int) -> MetricSpec:
        return self.metric if dim == self.ambient_dim else MetricSpec(dim)


# -- helpers -------------------------------------------------------------------------


def _req(table: dict, k: str, key: str):
    if k not in table:
        raise ScenarioError(f"{key}.{k}", "missing required key")
    return table[k]


def _expr(text, key, nparams=None):
    if not isinstance(text, (str, int, float)) or isinstance(text, bool):
        raise ScenarioError(key, f"expected an expression string, got {type(text).__name__}")
    try:
        return parse_expr(str(text), nparams)
    except ExprError as exc:
        raise ScenarioError(key, str(exc)) from None


def _int(v, key, lo=1):
    if isinstance(v, bool) or not isinstance(v, int) or v < lo:
        raise ScenarioError(key, f"expected an integer ≥ {lo}, got {v!r}")
    return v


def _matrix(v, key, n=None):
    try:
        M = np.array(v, dtype=float)
    except (TypeError, ValueError):
        raise ScenarioError(key, "expected a numeric matrix") from None
    if M.ndim != 2 or M.shape[0] != M.shape[1] or (n is not None and M.shape[0] != n):
        raise ScenarioError(key, f"expected a square {n or 'n'}x{n or 'n'} matrix, got shape {M.shape}")
    return M


def _vector_field(exprs):
    fns = [compile_expr(e) for e in exprs]
    return lambda x: [f(x) for f in fns]


# -- section loaders ----------------------------------------------------------------------


def _load_structures(raw: dict, n: int) -> dict:
    out: dict[str, TensorField11] = {}
    pending = dict(raw)
    # resolve in dependency order; conjugate/compose may refer to earlier names
    for _ in range(len(pending) + 1):
        progressed = False
        for name, entry in list(pending.items()):
            key = f"structures.{name}"
            if not isinstance(entry, dict):
                raise ScenarioError(key, "expected a table")
            deps = []
            if "conjugate" in entry:
                deps = [entry["conjugate"]]
            elif "compose" in entry:
                deps = list(entry["compose"])
            elif "block" in entry:
                deps = list(entry["block"])
            if any(d not in out for d in deps):
                missing = [d for d in deps if d not in out and d not in pending]
                if missing:
                    raise ScenarioError(key, f"undefined structure {missing[0]!r}")
                continue
            out[name] = _build_structure(name, entry, key, n, out)
            del pending[name]
            progressed = True
        if not pending:
            break
        if not progressed:
            raise ScenarioError(f"structures.{next(iter(pending))}", "circular structure definitions")
    return out


def _build_structure(name, entry, key, n, built) -> TensorField11:
    kinds = [k for k in ("matrix", "preset", "conjugate", "compose", "block") if k in entry]
    if len(kinds) != 1:
        raise ScenarioError(key, "exactly one of matrix, preset, conjugate, compose, block is required")
    kind = kinds[0]
    if kind == "matrix":
        return TensorField11.constant(_matrix(entry["matrix"], f"{key}.matrix"), name)
    if kind == "preset":
        preset = entry["preset"]
        if preset not in PRESETS:
            raise ScenarioError(f"{key}.preset", f"unknown preset {preset!r}; choose from {', '.join(sorted(PRESETS))}")
        if preset == "standard":
            dim = _int(entry.get("dim", n), f"{key}.dim")
            try:
                return standard_complex(dim, name)
            except DimensionError as exc:
                raise ScenarioError(f"{key}.dim", str(exc)) from None
        return PRESETS[preset](name=name)
    if kind == "conjugate":
        base = built[entry["conjugate"]]
        plane = entry.get("plane")
        if not (isinstance(plane, list) and len(plane) == 2):
            raise ScenarioError(f"{key}.plane", "expected two 1-based coordinate indices")
        i, j = (_int(p, f"{key}.plane") - 1 for p in plane)
        if max(i, j) >= base.dim or i == j:
            raise ScenarioError(f"{key}.plane", f"indices must be distinct and ≤ {base.dim}")
        angle = _expr(_req(entry, "angle", key), f"{key}.angle", base.dim)
        return conjugated(base, plane_rotation(base.dim, i, j, compile_expr(angle)), name)
    if kind == "block":
        return block_sum([built[p] for p in entry["block"]], name)
    parts = [built[p] for p in entry["compose"]]
    if len(parts) != 2:
        raise ScenarioError(f"{key}.compose", "expected two structure names")
    if parts[0].dim != parts[1].dim:
        raise ScenarioError(f"{key}.compose", "structures have different dimensions")
    return composed(parts[0], parts[1], name)


def _load_immersions(raw: dict) -> dict:
    out: dict[str, Immersion] = {}
    pending = dict(raw)
    while pending:
        progressed = False
        for name, entry in list(pending.items()):
            key = f"immersions.{name}"
            if not isinstance(entry, dict):
                raise ScenarioError(key, "expected a table")
            deps = list(entry.get("compose", [])) + list(entry.get("product", []))
            for d in deps:
                if d not in out and d not in pending:
                    raise ScenarioError(key, f"undefined immersion {d!r}")
            if any(d not in out for d in deps):
                continue
            out[name] = _build_immersion(name, entry, key, out)
            del pending[name]
            progressed = True
        if pending and not progressed:
            raise ScenarioError(f"immersions.{next(iter(pending))}", "circular immersion definitions")
    return out


def _build_immersion(name, entry, key, built) -> Immersion:
    if "components" in entry:
        k = _int(_req(entry, "domain", key), f"{key}.domain")
        comps = entry["components"]
        if not isinstance(comps, list) or not comps:
            raise ScenarioError(f"{key}.components", "expected a non-empty list of expressions")
        exprs = [_expr(c, f"{key}.components[{i}]", k) for i, c in enumerate(comps)]
        return immersion_from_components([compile_expr(e) for e in exprs], k, name)
    if "compose" in entry:
        outer, inner = (built[p] for p in entry["compose"])
        try:
            return compose(outer, inner, name)
        except DimensionError as exc:
            raise ScenarioError(f"{key}.compose", str(exc)) from None
    if "product" in entry:
        return product_immersion([built[p] for p in entry["product"]], name)
    raise ScenarioError(key, "one of components, compose, product is required")


def _load_grids(raw: dict) -> dict:
    out = {}
    for name, entry in raw.items():
        key = f"grids.{name}"
        kinds = [k for k in ("axes", "points", "random") if k in entry]
        if len(kinds) != 1:
            raise ScenarioError(key, "exactly one of axes, points, random is required")
        g = GridSpec(name, **{kinds[0]: entry[kinds[0]]})
        _validate_grid(g, key)
        out[name] = g
    return out


def _validate_grid(g: GridSpec, key):
    if g.axes is not None:
        if not g.axes:
            raise ScenarioError(f"{key}.axes", "grid is empty")
        for i, ax in enumerate(g.axes):
            if not (isinstance(ax, list) and len(ax) == 3):
                raise ScenarioError(f"{key}.axes[{i}]", "expected [min, max, steps]")
            _int(ax[2], f"{key}.axes[{i}].steps")
    elif g.points is not None:
        if not g.points or len({len(p) for p in g.points}) != 1:
            raise ScenarioError(f"{key}.points", "expected a non-empty list of equal-length points")
    else:
        for k in ("dim", "count", "seed"):
            _int(_req(g.random, k, f"{key}.random"), f"{key}.random.{k}", lo=0 if k == "seed" else 1)


# -- top level ------------------------------------------------------------------------------


def parse_scenario(text: str, source: str | None = None) -> ScenarioConfig:
    first = text.lstrip("﻿").splitlines()[0].strip() if text.strip() else ""
    if first != HEADER:
        raise ScenarioError("header", f"first line must be {HEADER!r}")
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioError("toml", str(exc)) from None

    known = {"name", "description", "ambient", "structures", "coefficients", "immersions", "fields", "grids", "checks"}
    for k in raw:
        if k not in known:
            raise ScenarioError(k, "unknown top-level key")
    name = str(raw.get("name", Path(source).stem if source else "scenario"))
    amb = _req(raw, "ambient", "scenario")
    n = _int(_req(amb, "dim", "ambient"), "ambient.dim")
    if "metric" in amb:
        try:
            metric = MetricSpec(n, _matrix(amb["metric"], "ambient.metric", n))
        except (ValueError, nk.NumericalError) as exc:
            raise ScenarioError("ambient.metric", str(exc)) from None
    else:
        metric = MetricSpec(n)

    structures = _load_structures(raw.get("structures", {}), n)

    coefficients, coeff_text = {}, {}
    for cname, exprs in raw.get("coefficients", {}).items():
        key = f"coefficients.{cname}"
        if not isinstance(exprs, list) or not exprs:
            raise ScenarioError(key, "expected a non-empty list of expressions")
        parsed = [_expr(e, f"{key}[{i}]") for i, e in enumerate(exprs)]
        coefficients[cname] = CoefficientFunctions([compile_expr(e) for e in parsed])
        coeff_text[cname] = [str(e) for e in exprs]
        if all(max_symbol(e) == 0 for e in parsed):
            try:
                coefficients[cname].check([np.zeros(n)])
            except NormalizationError as exc:
                raise ScenarioError(key, f"coefficients must satisfy a₁² + … + a_k² = 1 (got {exc.total!r})") from None

    immersions = _load_immersions(raw.get("immersions", {}))

    fields = {}
    for fname, entry in raw.get("fields", {}).items():
        key = f"fields.{fname}"
        comps = _req(entry, "components", key)
        fields[fname] = (len(comps), _vector_field([_expr(c, f"{key}.components[{i}]") for i, c in enumerate(comps)]))

    grids = _load_grids(raw.get("grids", {}))

    checks = []
    seen = set()
    for i, entry in enumerate(raw.get("checks", [])):
        key = f"checks[{i}]"
        cname = str(_req(entry, "name", key))
        if cname in seen:
            raise ScenarioError(f"{key}.name", f"duplicate check name {cname!r}")
        seen.add(cname)
        kind = _req(entry, "kind", key)
        if kind not in CHECK_KINDS:
            raise ScenarioError(f"{key}.kind", f"unknown check kind {kind!r}")
        tol = float(entry.get("tol", CHECK_KINDS[kind]))
        params = {k: v for k, v in entry.items() if k not in ("name", "kind", "tol")}
        checks.append(CheckSpec(cname, kind, tol, params, key))

    cfg = ScenarioConfig(name, str(raw.get("description", "")), n, metric, structures, coefficients, coeff_text,
                         immersions, fields, grids, checks, source)
    for chk in checks:
        _validate_check(cfg, chk)
    return cfg


def load_scenario(path) -> ScenarioConfig:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(str(path), f"cannot read scenario file: {exc.strerror or exc}") from None
    return parse_scenario(text, str(p))


# -- cross-reference validation ----------------------------------------------------------------


def _ref(cfg, table, name, key, what):
    d = getattr(cfg, table)
    if not isinstance(name, str) or name not in d:
        raise ScenarioError(key, f"undefined {what} {name!r}")
    return d[name]


def _grid_ref(cfg, chk, dim=None, param="grid"):
    key = f"{chk.key}.{param}"
    g = _ref(cfg, "grids", _req(chk.params, param, chk.key), key, "grid")
    if dim is not None and g.dim != dim:
        raise ScenarioError(key, f"grid {g.name!r} has dimension {g.dim}, expected {dim}")
    return g


def _structs(cfg, chk, key="structures", count=None):
    names = _req(chk.params, key, chk.key)
    if isinstance(names, str):
        names = [names]
    if count is not None and len(names) != count:
        raise ScenarioError(f"{chk.key}.{key}", f"expected {count} structure names")
    return [_ref(cfg, "structures", s, f"{chk.key}.{key}", "structure") for s in names]


def _validate_check(cfg: ScenarioConfig, chk: CheckSpec):
    p, kind, key = chk.params, chk.kind, chk.key
    n = cfg.ambient_dim
    if kind in ("almost_hermitian", "anticommute"):
        Js = _structs(cfg, chk, "structure" if kind == "almost_hermitian" else "structures",
                      1 if kind == "almost_hermitian" else 2)
        for J in Js:
            _grid_ref(cfg, chk, J.dim)
        return
    if kind in ("slant_scan", "cross_term", "family_slant", "family_slant_k", "anti_invariance",
                "induced_structure", "kahler"):
        F = _ref(cfg, "immersions", _req(p, "immersion", key), f"{key}.immersion", "immersion")
        _grid_ref(cfg, chk, F.domain_dim)
        if kind in ("slant_scan", "anti_invariance", "induced_structure", "kahler"):
            (J,) = _structs(cfg, chk, "structure", 1)
            Js = [J]
        elif kind == "cross_term" or kind == "family_slant":
            Js = _structs(cfg, chk, "structures", 2)
        else:
            Js = _structs(cfg, chk, "structures")
        target = n
        if kind == "anti_invariance" and "within" in p:
            outer = _ref(cfg, "immersions", p["within"], f"{key}.within", "immersion")
            if outer.ambient_dim != n:
                raise ScenarioError(f"{key}.within", f"immersion {outer.name!r} does not map into the ambient space")
            target = outer.domain_dim
        elif Js[0].dim != n:
            target = Js[0].dim
        if F.ambient_dim != target:
            raise ScenarioError(f"{key}.immersion", f"{F.name!r} maps into dimension {F.ambient_dim}, expected {target}")
        for J in Js:
            if kind != "anti_invariance" or "within" not in p:
                if J.dim != target:
                    raise ScenarioError(f"{key}.structure", f"structure {J.name!r} has dimension {J.dim}")
        if kind in ("family_slant", "family_slant_k"):
            c = _ref(cfg, "coefficients", _req(p, "coefficients", key), f"{key}.coefficients", "coefficient set")
            if len(c) != len(Js):
                raise ScenarioError(f"{key}.coefficients", f"{len(c)} coefficients for {len(Js)} structures")
            images = [F.point(u) for u in cfg.grid(_req(p, "grid", key))]
            try:
                c.check(images)
            except NormalizationError as exc:
                raise ScenarioError(f"coefficients.{p['coefficients']}",
                                    f"a₁² + … + a_k² = {exc.total!r} at {exc.point}, must be 1") from None
        for ek in ("expect_cos", "expect_c"):
            if ek in p:
                _expr(p[ek], f"{key}.{ek}", F.domain_dim)
        if "expect_class" in p and p["expect_class"] not in CLASS_NAMES:
            raise ScenarioError(f"{key}.expect_class", f"must be one of {', '.join(CLASS_NAMES)}")
        if kind == "kahler":
            for fk in ("X", "Y"):
                dim, _ = _ref(cfg, "fields", _req(p, fk, key), f"{key}.{fk}", "field")
                if dim != F.domain_dim:
                    raise ScenarioError(f"{key}.{fk}", f"field has {dim} components, expected {F.domain_dim}")
        if kind == "induced_structure" and "expect_matrix" in p:
            M = p["expect_matrix"]
            k = F.domain_dim
            if not (isinstance(M, list) and len(M) == k and all(isinstance(r, list) and len(r) == k for r in M)):
                raise ScenarioError(f"{key}.expect_matrix", f"expected a {k}x{k} matrix of expressions")
            for i, row in enumerate(M):
                for j, e in enumerate(row):
                    _expr(e, f"{key}.expect_matrix[{i}][{j}]", k)
        return
    if kind in ("transitivity", "chain"):
        names = _req(p, "immersions", key)
        Fs = [_ref(cfg, "immersions", s, f"{key}.immersions", "immersion") for s in names]
        if kind == "transitivity" and len(Fs) != 2:
            raise ScenarioError(f"{key}.immersions", "transitivity takes exactly two immersions")
        (J,) = _structs(cfg, chk, "structure", 1)
        if Fs[0].ambient_dim != J.dim:
            raise ScenarioError(f"{key}.immersions", f"{Fs[0].name!r} does not map into dimension {J.dim}")
        for outer, inner in zip(Fs, Fs[1:]):
            if inner.ambient_dim != outer.domain_dim:
                raise ScenarioError(f"{key}.immersions",
                                    f"{inner.name!r} maps into dimension {inner.ambient_dim}, "
                                    f"{outer.name!r} has {outer.domain_dim} parameters")
        _grid_ref(cfg, chk, Fs[-1].domain_dim)
        for ek in ("expect_cos_tilde",):
            if ek in p:
                _expr(p[ek], f"{key}.{ek}", Fs[-1].domain_dim)
        for i, e in enumerate(p.get("expect_cos_stages", [])):
            _expr(e, f"{key}.expect_cos_stages[{i}]")
        return
    if kind in ("decomposition", "nijenhuis", "nabla_family"):
        Js = _structs(cfg, chk, "structures")
        dim = Js[0].dim
        pairs = _req(p, "fields", key)
        for i, pair in enumerate(pairs):
            if not (isinstance(pair, list) and len(pair) == 2):
                raise ScenarioError(f"{key}.fields[{i}]", "expected [X, Y]")
            for fname in pair:
                fdim, _ = _ref(cfg, "fields", fname, f"{key}.fields[{i}]", "field")
                if fdim != dim:
                    raise ScenarioError(f"{key}.fields[{i}]", f"field {fname!r} has {fdim} components, expected {dim}")
        _grid_ref(cfg, chk, dim)
        if kind == "decomposition":
            if len(Js) != 2:
                raise ScenarioError(f"{key}.structures", "expected two structure names")
            a, b = float(_req(p, "a", key)), float(_req(p, "b", key))
            if abs(a * a + b * b - 1.0) > 1e-12:
                raise ScenarioError(f"{key}.a", f"a² + b² = {a * a + b * b!r}, must be 1")
        if kind == "nabla_family":
            c = _ref(cfg, "coefficients", _req(p, "coefficients", key), f"{key}.coefficients", "coefficient set")
            if len(c) != len(Js):
                raise ScenarioError(f"{key}.coefficients", f"{len(c)} coefficients for {len(Js)} structures")
        if kind == "nijenhuis" and p.get("expect", "vanishing") not in ("vanishing", "nonvanishing"):
            raise ScenarioError(f"{key}.expect", "must be 'vanishing' or 'nonvanishing'")
        return
    if kind == "product":
        mode = _req(p, "mode", key)
        if mode not in ("same-ambient", "distinct-ambients"):
            raise ScenarioError(f"{key}.mode", "must be 'same-ambient' or 'distinct-ambients'")
        parts = _req(p, "parts", key)
        total = 0
        for i, part in enumerate(parts):
            pk = f"{key}.parts[{i}]"
            F = _ref(cfg, "immersions", _req(part, "immersion", pk), f"{pk}.immersion", "immersion")
            J = _ref(cfg, "structures", _req(part, "structure", pk), f"{pk}.structure", "structure")
            if F.ambient_dim != J.dim:
                raise ScenarioError(pk, f"immersion maps into {F.ambient_dim}, structure has dimension {J.dim}")
            total += F.domain_dim
        _grid_ref(cfg, chk, total)
        if "expect_cos" in p:
            _expr(p["expect_cos"], f"{key}.expect_cos", total)
        return


# -- overrides ----------------------------------------------------------------------------------

_AXIS = re.compile(r"^(?:(?P<grid>[A-Za-z_][\w-]*)\.)?x(?P<axis>[1-9]\d*)=(?P<lo>[^:]+):(?P<hi>[^:]+):(?P<n>\d+)$")


def apply_grid_override(cfg: ScenarioConfig, text: str):
    """``AXIS=min:max:steps`` or ``GRID.AXIS=min:max:steps`` on lattice grids."""
    m = _AXIS.match(text.strip())
    if not m:
        raise ScenarioError("--grid", f"cannot parse {text!r}; expected [GRID.]xN=min:max:steps")
    axis = int(m["axis"]) - 1
    try:
        lo, hi = float(m["lo"]), float(m["hi"])
    except ValueError:
        raise ScenarioError("--grid", f"bounds in {text!r} are not numbers") from None
    steps = int(m["n"])
    if steps < 1:
        raise ScenarioError("--grid", "steps must be ≥ 1")
    if m["grid"]:
        if m["grid"] not in cfg.grids:
            raise ScenarioError("--grid", f"undefined grid {m['grid']!r}")
        targets = [cfg.grids[m["grid"]]]
    else:
        targets = [g for g in cfg.grids.values() if g.axes is not None and axis < len(g.axes)]
    hit = False
    for g in targets:
        if g.axes is None or axis >= len(g.axes):
            raise ScenarioError("--grid", f"grid {g.name!r} has no lattice axis x{axis + 1}")
        g.axes = [list(a) for a in g.axes]
        g.axes[axis] = [lo, hi, steps]
        hit = True
    if not hit:
        raise ScenarioError("--grid", f"no lattice grid has axis x{axis + 1}")
