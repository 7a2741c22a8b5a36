"""Execute validated scenarios and collect reports."""

from __future__ import annotations

import math
from importlib import resources

import numpy as np

from .. import __version__
from .. import numkit as nk
from .. import slant as sl
from ..immersion import DegenerateFrameError, frame_at
from ..structures import (
    build_family_k,
    decomposition_check,
    fn_bracket,
    nabla_J,
    nijenhuis,
    verify_almost_hermitian,
    verify_anticommute,
)
from .config import ScenarioConfig, ScenarioError, load_scenario, parse_scenario
from .expr import compile_expr, parse_expr
from .report import CheckRecord, Report

BUILTINS = {"e1": "example1.scn", "e2": "example2.scn", "e3": "example3.scn", "e4": "example4.scn"}


def _f(v):
    return None if v is None else float(v)


def _excl(items):
    return [{"point": [float(t) for t in e.point], "reason": e.reason} for e in items]


def _max(vals, default=0.0):
    vals = [v for v in vals if v is not None]
    return max(vals) if vals else default


class Runner:
    def __init__(self, cfg: ScenarioConfig, tol: nk.Tolerances = nk.DEFAULT_TOL, check_tols=None, workers=1):
        self.cfg = cfg
        self.tol = tol
        self.check_tols = dict(check_tols or {})
        self.workers = workers
        unknown = set(self.check_tols) - {c.name for c in cfg.checks}
        if unknown:
            raise ScenarioError("--tol", f"no check named {sorted(unknown)[0]!r}")

    def run(self) -> Report:
        rep = Report(self.cfg.name, __version__, self.tol.as_dict())
        for chk in self.cfg.checks:
            tol = self.check_tols.get(chk.name, chk.tol)
            rec = getattr(self, "_" + chk.kind)(chk.params, tol)
            rec.name, rec.kind, rec.tol = chk.name, chk.kind, tol
            rep.checks.append(rec)
        return rep

    # -- lookups ---------------------------------------------------------------------

    def _grid(self, p):
        return self.cfg.grid(p["grid"])

    def _structs(self, p, key="structures"):
        names = p[key]
        if isinstance(names, str):
            names = [names]
        return [self.cfg.structures[n] for n in names]

    def _metric(self, dim):
        return self.cfg.metric_for(dim)

    def _expect(self, p, key, nparams=None):
        if key not in p:
            return None
        return compile_expr(parse_expr(str(p[key]), nparams))

    # -- structure checks --------------------------------------------------------------

    def _almost_hermitian(self, p, tol):
        (J,) = self._structs(p, "structure")
        r = verify_almost_hermitian(J, self._metric(J.dim), self._grid(p), nk.Tolerances(tol, self.tol.spectral, self.tol.fd))
        return CheckRecord("", "", r.passed, tol, {
            "max_residual": r.residual,
            "square_residual": float(r.detail.get("square_residual", math.nan)),
            "skew_residual": float(r.detail.get("skew_residual", math.nan)),
            "samples": len(r.residuals),
        })

    def _anticommute(self, p, tol):
        J1, J2 = self._structs(p)
        r = verify_anticommute(J1, J2, self._grid(p), nk.Tolerances(tol, self.tol.spectral, self.tol.fd))
        return CheckRecord("", "", r.passed, tol, {"max_residual": r.residual, "samples": len(r.residuals)})

    def _field_pairs(self, p):
        return [(self.cfg.fields[a][1], self.cfg.fields[b][1]) for a, b in p["fields"]]

    def _decomposition(self, p, tol):
        J1, J2 = self._structs(p)
        a, b = float(p["a"]), float(p["b"])
        pts = self._grid(p)
        worst = 0.0
        bracket = 0.0
        for X, Y in self._field_pairs(p):
            worst = max(worst, decomposition_check(J1, J2, a, b, X, Y, pts))
            bracket = max(bracket, max(float(np.linalg.norm(fn_bracket(J1, J2, X, Y, x))) for x in pts))
        note = ("bracket vanishes at all samples (no counterexample to integrability found)" if bracket <= tol
                else "bracket nonzero at some sample")
        return CheckRecord("", "", worst <= tol, tol, {
            "max_residual": worst, "max_bracket_norm": bracket, "samples": len(pts) * len(p["fields"])}, note=note)

    def _nijenhuis(self, p, tol):
        Js = self._structs(p)
        pts = self._grid(p)
        metrics = {}
        worst = 0.0
        for J in Js:
            m = max(float(np.linalg.norm(nijenhuis(J, X, Y, x))) for X, Y in self._field_pairs(p) for x in pts)
            metrics[f"max_norm[{J.name}]"] = m
            worst = max(worst, m)
        expect = p.get("expect", "vanishing")
        passed = worst <= tol if expect == "vanishing" else worst > tol
        note = (f"no counterexample found at {len(pts)} samples" if worst <= tol
                else "nonzero Nijenhuis tensor found")
        return CheckRecord("", "", passed, tol, metrics, note=note)

    def _nabla_family(self, p, tol):
        Js = self._structs(p)
        c = self.cfg.coefficients[p["coefficients"]]
        pts = self._grid(p)
        Jf = build_family_k(Js, c, points=pts[:1])
        worst, biggest = 0.0, 0.0
        points = []
        for x in pts:
            here, size = 0.0, 0.0
            for X, Y in self._field_pairs(p):
                got = nabla_J(Jf, X, Y, x)
                xv = np.asarray(nk.as_vector(X(list(x))), dtype=float)
                yv = np.asarray(nk.as_vector(Y(list(x))), dtype=float)
                da = [float(nk.jacobian(lambda w, f=f: [f(w)], x)[0] @ xv) for f in c.funcs]
                av = [nk.value_of(v) for v in c.values(list(x))]
                want = sum(d * (J.at(x) @ yv) + a * nabla_J(J, X, Y, x) for d, a, J in zip(da, av, Js))
                here = max(here, float(np.linalg.norm(got - want)))
                size = max(size, float(np.linalg.norm(got)))
            worst, biggest = max(worst, here), max(biggest, size)
            points.append({"param": x.tolist(), "norm": size, "residual": here})
        return CheckRecord("", "", worst <= tol, tol, {"max_residual": worst, "max_norm": biggest}, points)

    # -- slant checks --------------------------------------------------------------------

    def _slant_scan(self, p, tol):
        F = self.cfg.immersions[p["immersion"]]
        (J,) = self._structs(p, "structure")
        g = self._metric(J.dim)
        expect = self._expect(p, "expect_cos", F.domain_dim)
        scan = sl.slant_function_scan(F, J, g, self._grid(p), self.tol, self.workers)
        points, err, t2, samp = [], 0.0, 0.0, 0.0
        want_class = p.get("expect_class")
        hits = 0
        for r in scan.reports:
            rec = {"param": r.param.tolist(), "classification": r.classification, "spread": r.spread,
                   "cos_theta": _f(r.cos_theta), "theta": _f(r.theta)}
            if expect is not None:
                e = nk.value_of(expect(list(r.param)))
                rec["expected_cos"] = e
                d = abs(r.cos_theta - e) if r.cos_theta is not None else math.inf
                rec["error"] = d
                err = max(err, d)
            if p.get("oracle") and r.classification == sl.PROPER:
                t2 = max(t2, sl.t2_identity_residual(r))
                samp = max(samp, float(np.abs(sl.sampled_quotients(r.C, r.gram, 64) - r.mean).max()))
            hits += want_class is not None and r.classification == want_class
            points.append(rec)
        metrics = {"theta_min": _f(scan.theta_min), "theta_max": _f(scan.theta_max)}
        passed = bool(scan.reports)
        if expect is not None:
            metrics["max_cos_error"] = err
            passed &= err <= tol
        if p.get("oracle"):
            metrics["t2_identity_max"] = t2
            metrics["sampling_max_deviation"] = samp
            passed &= t2 <= tol and samp <= tol
        if "expect_slant" in p:
            slant_pts = sum(r.is_slant for r in scan.reports)
            metrics["slant_points"] = slant_pts
            passed &= (slant_pts == len(scan.reports)) == bool(p["expect_slant"])
        if want_class is not None:
            frac = float(p.get("expect_class_fraction", 1.0))
            metrics["class_matches"] = hits
            passed &= hits >= frac * len(scan.reports) and (frac < 1.0 or hits == len(scan.reports))
        return CheckRecord("", "", passed, tol, metrics, points, _excl(scan.exclusions))

    def _cross_term(self, p, tol):
        F = self.cfg.immersions[p["immersion"]]
        J1, J2 = self._structs(p)
        g = self._metric(J1.dim)
        expect = self._expect(p, "expect_c", F.domain_dim)
        points, excl, err = [], [], 0.0
        holds = True
        for u in self._grid(p):
            try:
                ct = sl.cross_term(frame_at(F, u, g), J1, J2, g, self.tol)
            except DegenerateFrameError as exc:
                excl.append(sl.Exclusion(u.tolist(), str(exc)))
                continue
            rec = {"param": u.tolist(), "c": ct.c, "residual": ct.residual, "hypothesis_holds": ct.hypothesis_holds}
            if expect is not None:
                e = nk.value_of(expect(list(u)))
                rec["expected_c"] = e
                err = max(err, abs(ct.c - e))
            holds &= ct.hypothesis_holds
            points.append(rec)
        metrics = {"max_residual": _max([r["residual"] for r in points])}
        passed = bool(points)
        if expect is not None:
            metrics["max_c_error"] = err
            passed &= err <= tol
        if "expect_hypothesis" in p:
            passed &= holds == bool(p["expect_hypothesis"])
        return CheckRecord("", "", passed, tol, metrics, points, _excl(excl))

    def _family(self, p, tol, Js):
        F = self.cfg.immersions[p["immersion"]]
        c = self.cfg.coefficients[p["coefficients"]]
        g = self._metric(Js[0].dim)
        expect = self._expect(p, "expect_cos", F.domain_dim)
        rep = sl.family_slant_check_k(F, Js, c, g, self._grid(p), self.tol)
        points, err = [], 0.0
        for fp in rep.points:
            rec = {"param": fp.param, "coefficients": fp.coeffs, "cos_parts": fp.cos_parts,
                   "cos_direct": _f(fp.cos_direct), "cos_formula": fp.cos_formula,
                   "classification": fp.classification, "spread": fp.spread}
            for k, v in fp.cross.items():
                rec["c" + k.replace(",", "")] = v
            if expect is not None:
                e = nk.value_of(expect(fp.param))
                rec["expected_cos"] = e
                d = abs(fp.cos_direct - e) if fp.cos_direct is not None else math.inf
                err = max(err, d)
            points.append(rec)
        metrics = {
            "max_cos_diff": rep.max_cos_diff,
            "biconditional_failures": len(rep.biconditional_failures),
            "bound_failures": len(rep.bound_failures),
            "anti_invariance_failures": len(rep.anti_invariance_failures),
            "zero_cross_max_diff": rep.zero_cross_max_diff,
        }
        if rep.single_part_points:
            metrics["single_part_max_diff"] = rep.single_part_max_diff
            metrics["single_part_points"] = rep.single_part_points
            metrics["theta_below_part"] = len(rep.theta_below_part)
        passed = bool(points) and rep.max_cos_diff <= tol and rep.zero_cross_max_diff <= tol and \
            rep.single_part_max_diff <= tol and not (rep.biconditional_failures or rep.bound_failures or
                                                   rep.anti_invariance_failures or rep.theta_below_part)
        if expect is not None:
            metrics["max_cos_error"] = err
            passed &= err <= tol
        return CheckRecord("", "", passed, tol, metrics, points, _excl(rep.exclusions))

    def _family_slant(self, p, tol):
        return self._family(p, tol, self._structs(p))

    def _family_slant_k(self, p, tol):
        return self._family(p, tol, self._structs(p))

    def _anti_invariance(self, p, tol):
        F = self.cfg.immersions[p["immersion"]]
        (J,) = self._structs(p, "structure")
        g = self._metric(J.dim)
        if "within" in p:
            geo = sl.InducedGeometry(self.cfg.immersions[p["within"]], J, g, self.tol)
            J, g = geo.structure, geo.metric
        points, excl = [], []
        for u in self._grid(p):
            try:
                fr = frame_at(F, u, g)
                res = sl.anti_invariance_residual(fr, J, g)
                cls = sl.slant_at(fr, J, g, self.tol).classification
            except (DegenerateFrameError, sl.UndefinedStructureError) as exc:
                excl.append(sl.Exclusion(u.tolist(), str(exc)))
                continue
            points.append({"param": u.tolist(), "residual": res, "classification": cls})
        worst = _max([r["residual"] for r in points])
        passed = bool(points) and worst <= tol and all(r["classification"] == sl.ANTI_INVARIANT for r in points)
        return CheckRecord("", "", passed, tol, {"max_residual": worst}, points, _excl(excl))

    def _chain_like(self, p, tol):
        Fs = [self.cfg.immersions[n] for n in p["immersions"]]
        (J,) = self._structs(p, "structure")
        g = self._metric(J.dim)
        rep = sl.transitivity_chain_check(Fs, J, g, self._grid(p), self.tol, on_violation="exclude")
        exp_tilde = self._expect(p, "expect_cos_tilde", Fs[-1].domain_dim)
        exp_stages = [compile_expr(parse_expr(str(e))) for e in p.get("expect_cos_stages", [])]
        points, err = [], 0.0
        for cp in rep.points:
            rec = {"param": cp.param, "cos_theta_tilde": _f(cp.cos_tilde), "residual": _f(cp.residual),
                   "classification_tilde": cp.class_tilde}
            for i, (cs, cl) in enumerate(zip(cp.cos_stages, cp.classes), 1):
                rec[f"cos_theta{i}"] = cs
                rec[f"classification{i}"] = cl
            if exp_tilde is not None:
                err = max(err, abs(cp.cos_tilde - nk.value_of(exp_tilde(cp.param))))
            for e, cs in zip(exp_stages, cp.cos_stages):
                err = max(err, abs(cs - nk.value_of(e(cp.param))))
            points.append(rec)
        metrics = {"max_residual": rep.max_residual, "bound_failures": len(rep.bound_failures),
                   "anti_invariance_failures": len(rep.anti_invariance_failures)}
        passed = bool(points) and rep.max_residual <= tol and not rep.bound_failures and not rep.anti_invariance_failures
        if exp_tilde is not None or exp_stages:
            metrics["max_expect_error"] = err
            passed &= err <= tol
        return CheckRecord("", "", passed, tol, metrics, points, _excl(rep.exclusions))

    _transitivity = _chain_like
    _chain = _chain_like

    def _induced_structure(self, p, tol):
        F = self.cfg.immersions[p["immersion"]]
        (J,) = self._structs(p, "structure")
        geo = sl.InducedGeometry(F, J, self._metric(J.dim), self.tol)
        k = F.domain_dim
        expect = None
        if "expect_matrix" in p:
            expect = [[compile_expr(parse_expr(str(e), k)) for e in row] for row in p["expect_matrix"]]
        points, excl = [], []
        worst = err = 0.0
        for u in self._grid(p):
            try:
                J2 = geo.structure.at(u)
            except (DegenerateFrameError, sl.UndefinedStructureError) as exc:
                excl.append(sl.Exclusion(u.tolist(), str(exc)))
                continue
            G = geo.metric.at(u)
            sq = float(np.abs(J2 @ J2 + np.eye(k)).max())
            sk = float(np.abs(G @ J2 + J2.T @ G).max())
            rec = {"param": u.tolist(), "square_residual": sq, "skew_residual": sk, "matrix": J2.ravel().tolist()}
            if expect is not None:
                E = np.array([[nk.value_of(f(list(u))) for f in row] for row in expect])
                rec["expect_error"] = float(np.abs(J2 - E).max())
                err = max(err, rec["expect_error"])
            worst = max(worst, sq, sk)
            points.append(rec)
        metrics = {"max_residual": worst}
        passed = bool(points) and worst <= tol
        if expect is not None:
            metrics["max_expect_error"] = err
            passed &= err <= tol
        return CheckRecord("", "", passed, tol, metrics, points, _excl(excl))

    def _kahler(self, p, tol):
        F = self.cfg.immersions[p["immersion"]]
        (J,) = self._structs(p, "structure")
        X, Y = self.cfg.fields[p["X"]][1], self.cfg.fields[p["Y"]][1]
        points, excl = [], []
        worst = 0.0
        agree = True
        for u in self._grid(p):
            try:
                kr = sl.kahler_condition_check(F, J, self._metric(J.dim), u, X, Y, self.tol)
            except (DegenerateFrameError, sl.UndefinedStructureError) as exc:
                excl.append(sl.Exclusion(u.tolist(), str(exc)))
                continue
            points.append({"param": u.tolist(), "r1": kr.r1, "r2": kr.r2, "theta": kr.theta,
                           "x_theta": kr.x_theta, "consistency": kr.consistency})
            worst = max(worst, kr.consistency)
            agree &= kr.verdicts_agree(tol)
        return CheckRecord("", "", bool(points) and worst <= tol and agree, tol,
                           {"max_consistency": worst, "verdicts_agree": agree}, points, _excl(excl))

    def _product(self, p, tol):
        parts = []
        for part in p["parts"]:
            F = self.cfg.immersions[part["immersion"]]
            J = self.cfg.structures[part["structure"]]
            parts.append((F, J, self._metric(J.dim)))
        rep = sl.product_check(parts, p["mode"], self._grid(p), self.tol)
        expect = self._expect(p, "expect_cos", sum(F.domain_dim for F, _, _ in parts))
        points, err = [], 0.0
        for pp in rep.points:
            rec = {"param": pp.param, "factor_cos": pp.factor_cos, "factor_classes": pp.factor_classes,
                   "classification": pp.classification, "spread": pp.spread, "cos_theta": _f(pp.cos_theta)}
            if expect is not None:
                d = abs(pp.cos_theta - nk.value_of(expect(pp.param))) if pp.cos_theta is not None else math.inf
                err = max(err, d)
            points.append(rec)
        metrics = {"pointwise_failures": len(rep.pointwise_failures), "all_slant": rep.all_slant,
                   "factors_constant_equal": rep.factors_constant_equal}
        passed = bool(points) and rep.consistent
        if "expect_slant" in p:
            passed &= rep.all_slant == bool(p["expect_slant"])
        if expect is not None:
            metrics["max_cos_error"] = err
            passed &= err <= tol
        return CheckRecord("", "", passed, tol, metrics, points, _excl(rep.exclusions))


def run_scenario(cfg: ScenarioConfig, tol: nk.Tolerances = nk.DEFAULT_TOL, check_tols=None, workers=1) -> Report:
    return Runner(cfg, tol, check_tols, workers).run()


def builtin_path(name: str):
    if name not in BUILTINS:
        raise ScenarioError("example", f"unknown example {name!r}; choose from {', '.join(BUILTINS)}")
    return resources.files("slantgeom.scenarios") / "data" / BUILTINS[name]


def load_builtin(name: str) -> ScenarioConfig:
    path = builtin_path(name)
    return parse_scenario(path.read_text(encoding="utf-8"), BUILTINS[name])


def run_builtin(name: str, tol: nk.Tolerances = nk.DEFAULT_TOL, check_tols=None, workers=1) -> Report:
    return run_scenario(load_builtin(name), tol, check_tols, workers)


def bundled_scenarios() -> list[str]:
    d = resources.files("slantgeom.scenarios") / "data"
    return sorted(p.name for p in d.iterdir() if p.name.endswith(".scn"))


def load_bundled(filename: str) -> ScenarioConfig:
    """Any scenario file shipped with the package, e.g. ``"chain3.scn"``."""
    path = resources.files("slantgeom.scenarios") / "data" / filename
    if not path.is_file():
        raise ScenarioError("scenario", f"no bundled scenario {filename!r}")
    return parse_scenario(path.read_text(encoding="utf-8"), filename)


__all__ = ["run_scenario", "run_builtin", "load_builtin", "load_scenario", "bundled_scenarios", "load_bundled", "BUILTINS"]
