"""Pointwise slant analysis.

A submanifold is pointwise slant at x exactly when CᵀGC = cos²θ·G, i.e. when
the pencil (CᵀGC, G) has a single eigenvalue.  The spread of that spectrum is
the slantness test; direction sampling is kept only as an independent oracle.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Callable, Sequence

import numpy as np
from . import numkit as nk
from .immersion import (
    DegenerateFrameError,
    Immersion,
    PointFrame,
    compose,
    frame_at,
    frame_jets,
    gauss_correction,
    product_immersion,
    tangential_operator,
)
from .numkit import DEFAULT_TOL, Tolerances
from .structures import (
    CoefficientFunctions,
    DimensionError,
    MetricSpec,
    TensorField11,
    block_sum,
    build_family_k,
)

PROPER = "pointwise-slant-proper"
ANTI_INVARIANT = "anti-invariant"
INVARIANT = "invariant"
NOT_SLANT = "not-slant"


class UndefinedStructureError(ValueError):
    """The induced structure sec θ·T is undefined at a point."""

    def __init__(self, param, reason):
        self.param = [float(v) for v in param]
        self.reason = reason
        super().__init__(f"induced structure undefined at {self.param}: {reason}")


class HypothesisError(ValueError):
    def __init__(self, stage, param, reason):
        self.stage = stage
        self.param = [float(v) for v in param]
        self.reason = reason
        super().__init__(f"stage {stage} hypothesis violated at {self.param}: {reason}")


@dataclass(frozen=True)
class Exclusion:
    point: list
    reason: str


@dataclass(frozen=True)
class SlantReport:
    param: np.ndarray
    eigenvalues: np.ndarray
    spread: float
    mean: float
    theta: float | None
    classification: str
    C: np.ndarray
    gram: np.ndarray

    @property
    def cos_theta(self) -> float | None:
        if self.theta is None:
            return None
        return math.sqrt(min(max(self.mean, 0.0), 1.0))

    @property
    def is_slant(self) -> bool:
        return self.classification != NOT_SLANT

    @property
    def in_slant_range(self) -> bool:
        """Slant with θ in (0, π/2]."""
        return self.classification in (PROPER, ANTI_INVARIANT)


def classify(eigenvalues, mean, tol: Tolerances = DEFAULT_TOL):
    spread = float(eigenvalues[-1] - eigenvalues[0]) if len(eigenvalues) else 0.0
    if spread > tol.spectral:
        return spread, None, NOT_SLANT
    theta = math.acos(math.sqrt(min(max(mean, 0.0), 1.0)))
    if mean <= tol.spectral:
        return spread, theta, ANTI_INVARIANT
    if 1.0 - mean <= tol.spectral:
        return spread, theta, INVARIANT
    return spread, theta, PROPER


def slant_at(fr: PointFrame, J: TensorField11, g: MetricSpec | None = None,
             tol: Tolerances = DEFAULT_TOL) -> SlantReport:
    C = tangential_operator(fr, J, g).C
    G = fr.gram
    A = C.T @ G @ C
    A = 0.5 * (A + A.T)
    eig = nk.gen_sym_eig(A, G, fr.chol)
    mean = nk.pencil_mean(A, G, fr.chol)
    spread, theta, cls = classify(eig.eigenvalues, mean, tol)
    return SlantReport(fr.param, eig.eigenvalues, spread, mean, theta, cls, C, G)


def anti_invariance_residual(fr: PointFrame, J: TensorField11, g: MetricSpec | None = None) -> float:
    """max |g(J Eᵢ, Eⱼ)| over frame columns."""
    JE = tangential_operator(fr, J, g).image
    return float(np.abs(fr.frame.T @ fr.metric @ JE).max())


def t2_identity_residual(rep: SlantReport) -> float:
    """‖C² + cos²θ·I‖, which vanishes at slant points because C is G-skew."""
    k = rep.C.shape[0]
    return float(np.linalg.norm(rep.C @ rep.C + rep.mean * np.eye(k)))


# -- direction-sampling oracle ---------------------------------------------------


def unit_directions(k: int, count: int) -> np.ndarray:
    """``count`` deterministic low-discrepancy directions on S^{k-1} (rows)."""
    if k == 1:
        return np.array([[1.0], [-1.0]] * ((count + 1) // 2))[:count]
    if k == 2:
        t = np.pi * (np.arange(count) + 0.5) / count
        return np.column_stack([np.cos(t), np.sin(t)])
    # additive recurrence with the generalized golden ratio (root of t^(k+1) = t + 1)
    phi = 2.0
    for _ in range(64):
        phi = (1.0 + phi) ** (1.0 / (k + 1))
    alpha = phi ** -np.arange(1, k + 1)
    pts = (0.5 + np.outer(np.arange(1, count + 1), alpha)) % 1.0
    inv = NormalDist().inv_cdf
    z = np.vectorize(inv)(pts)
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def rayleigh(C, G, u) -> float:
    """‖Cu‖²_G / ‖u‖²_G."""
    Cu = C @ u
    return float(Cu @ G @ Cu) / float(u @ G @ u)


def sampled_quotients(C, G, count=64) -> np.ndarray:
    return np.array([rayleigh(C, G, u) for u in unit_directions(C.shape[0], count)])


def brute_force_extremes(C, G, count=256) -> tuple[float, float]:
    """min and max of the quotient: direction sampling, then local polishing of the best samples."""
    dirs = unit_directions(C.shape[0], count)
    q = np.array([rayleigh(C, G, u) for u in dirs])
    if C.shape[0] == 1:
        return float(q.min()), float(q.max())

    from scipy import optimize

    def polish(u0, sign):
        res = optimize.minimize(lambda u: sign * rayleigh(C, G, u), u0, method="Nelder-Mead",
                                options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 20000})
        return sign * res.fun

    lo = min(q.min(), polish(dirs[int(q.argmin())], 1.0))
    hi = max(q.max(), polish(dirs[int(q.argmax())], -1.0))
    return float(lo), float(hi)


# -- scans ------------------------------------------------------------------------


@dataclass
class SlantScan:
    reports: list
    exclusions: list
    theta_min: float | None
    theta_max: float | None


def _map_points(fn, grid, workers):
    grid = [np.asarray(p, dtype=float) for p in grid]
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, grid))
    return [fn(p) for p in grid]


def _guarded(fn):
    def run(p):
        try:
            return fn(p)
        except (DegenerateFrameError, nk.NumericalError, UndefinedStructureError, HypothesisError) as exc:
            return Exclusion([float(v) for v in p], str(exc))
    return run


def slant_function_scan(F: Immersion, J: TensorField11, g: MetricSpec, grid,
                        tol: Tolerances = DEFAULT_TOL, workers: int = 1) -> SlantScan:
    results = _map_points(_guarded(lambda u: slant_at(frame_at(F, u, g), J, g, tol)), grid, workers)
    reports = [r for r in results if isinstance(r, SlantReport)]
    excl = [r for r in results if isinstance(r, Exclusion)]
    thetas = [r.theta for r in reports if r.theta is not None]
    return SlantScan(reports, excl, min(thetas, default=None), max(thetas, default=None))


# -- cross terms and families ----------------------------------------------------------


@dataclass(frozen=True)
class CrossTermReport:
    param: np.ndarray
    S: np.ndarray
    c: float
    residual: float
    hypothesis_holds: bool


def cross_form(fr: PointFrame, C1, C2):
    S = 0.5 * (C1.T @ fr.gram @ C2 + C2.T @ fr.gram @ C1)
    c = nk.pencil_mean(S, fr.gram, fr.chol)
    return S, c, float(np.linalg.norm(S - c * fr.gram))


def cross_term(fr: PointFrame, J1: TensorField11, J2: TensorField11, g: MetricSpec | None = None,
               tol: Tolerances = DEFAULT_TOL) -> CrossTermReport:
    """The symmetric form u ↦ g(T1u, T2u) and its best multiple of G."""
    C1 = tangential_operator(fr, J1, g).C
    C2 = tangential_operator(fr, J2, g).C
    S, c, res = cross_form(fr, C1, C2)
    return CrossTermReport(fr.param, S, c, res, res <= tol.spectral * float(np.linalg.norm(fr.gram)))


@dataclass
class FamilyPoint:
    param: list
    coeffs: list
    cos_parts: list
    cross: dict
    cos_direct: float | None
    cos_formula: float | None
    spread: float
    classification: str
    cross_residual: float


@dataclass
class FamilyReport:
    points: list = field(default_factory=list)
    exclusions: list = field(default_factory=list)
    max_cos_diff: float = 0.0
    biconditional_failures: list = field(default_factory=list)
    bound_failures: list = field(default_factory=list)
    anti_invariance_failures: list = field(default_factory=list)
    zero_cross_max_diff: float = 0.0
    single_part_max_diff: float = 0.0
    single_part_points: int = 0
    theta_below_part: list = field(default_factory=list)


def _image_points(F, grid):
    return [F.point(u) for u in grid]


def family_slant_check_k(F: Immersion, Js: Sequence[TensorField11], c: CoefficientFunctions, g: MetricSpec,
                         grid, tol: Tolerances = DEFAULT_TOL) -> FamilyReport:
    """Compare the family's slant angle computed directly with the cross-term formula.

    Also checks, per point: direct slantness ⟺ the coefficient-weighted cross
    form Σ aᵢaⱼ g(Tᵢu, Tⱼu) is a multiple of G; the zero-cross-term formula and
    its min/max bound; the all-anti-invariant closure; and, when every factor
    but the first is anti-invariant, θ = arccos(|a₁| cos θ₁) with θ ≥ θ₁.
    """
    Js = list(Js)
    k = len(Js)
    grid = [np.asarray(u, dtype=float) for u in grid]
    images = _image_points(F, grid)
    c.check(images)
    Jfam = build_family_k(Js, c, points=images[:1] or None, tol=tol) if k > 1 else Js[0]
    out = FamilyReport()
    for u, x in zip(grid, images):
        try:
            fr = frame_at(F, u, g)
            parts = [slant_at(fr, J, g, tol) for J in Js]
            direct = slant_at(fr, Jfam, g, tol)
        except (DegenerateFrameError, nk.NumericalError) as exc:
            out.exclusions.append(Exclusion(u.tolist(), str(exc)))
            continue
        bad = [(J.name, r.classification) for J, r in zip(Js, parts) if not r.in_slant_range]
        if bad:
            out.exclusions.append(Exclusion(u.tolist(), "not pointwise slant (θ ∈ (0, π/2]) under "
                                            + ", ".join(f"{n}: {cl}" for n, cl in bad)))
            continue
        a = [nk.value_of(v) for v in c.values(x)]
        cross = {}
        weighted = np.zeros_like(fr.gram)
        cross_total = 0.0
        for i in range(k):
            for j in range(i + 1, k):
                S, cij, _ = cross_form(fr, parts[i].C, parts[j].C)
                cross[(i, j)] = cij
                weighted += a[i] * a[j] * S
                cross_total += a[i] * a[j] * cij
        wmean = nk.pencil_mean(weighted, fr.gram, fr.chol)
        wres = float(np.linalg.norm(weighted - wmean * fr.gram))
        cos2 = math.fsum(a[i] ** 2 * parts[i].mean for i in range(k)) + 2.0 * cross_total
        cos_formula = math.sqrt(max(cos2, 0.0))
        cos_direct = direct.cos_theta
        pt = FamilyPoint(u.tolist(), a, [p.cos_theta for p in parts],
                         {f"{i + 1},{j + 1}": v for (i, j), v in cross.items()},
                         cos_direct, cos_formula, direct.spread, direct.classification, wres)
        out.points.append(pt)

        form_ok = wres <= tol.spectral * float(np.linalg.norm(fr.gram))
        if direct.is_slant != form_ok:
            out.biconditional_failures.append(u.tolist())
        if direct.is_slant:
            out.max_cos_diff = max(out.max_cos_diff, abs(cos_direct - cos_formula))

        thetas = [p.theta for p in parts]
        if all(abs(v) <= tol.spectral for v in cross.values()) and direct.is_slant:
            zc = math.sqrt(max(math.fsum(a[i] ** 2 * parts[i].mean for i in range(k)), 0.0))
            out.zero_cross_max_diff = max(out.zero_cross_max_diff, abs(cos_direct - zc))
            if not (min(thetas) - tol.spectral <= direct.theta <= max(thetas) + tol.spectral):
                out.bound_failures.append(u.tolist())
        if all(p.classification == ANTI_INVARIANT for p in parts) and direct.classification != ANTI_INVARIANT:
            out.anti_invariance_failures.append(u.tolist())
        if k >= 2 and all(p.classification == ANTI_INVARIANT for p in parts[1:]) and direct.is_slant:
            out.single_part_points += 1
            expected = abs(a[0]) * parts[0].cos_theta
            out.single_part_max_diff = max(out.single_part_max_diff, abs(cos_direct - expected))
            if direct.theta < thetas[0] - tol.spectral:
                out.theta_below_part.append(u.tolist())
    return out


def family_slant_check(F: Immersion, J1: TensorField11, J2: TensorField11, c: CoefficientFunctions,
                       g: MetricSpec, grid, tol: Tolerances = DEFAULT_TOL) -> FamilyReport:
    if len(c) != 2:
        raise ValueError("a binary family needs exactly two coefficient functions")
    return family_slant_check_k(F, [J1, J2], c, g, grid, tol)


# -- induced structures and transitivity ---------------------------------------------


class InducedGeometry:
    """Geometry a proper pointwise slant immersion F inherits on its parameter space.

    ``structure`` is J₂ = sec θ·T as a coefficient field on ℝᵏ; ``metric`` is
    the induced Gram field.  Both accept jets (first order exact), so the
    result can serve as the ambient of the next immersion in a chain.
    """

    def __init__(self, F: Immersion, J: TensorField11, g: MetricSpec, tol: Tolerances = DEFAULT_TOL,
                 name=None):
        self.F, self.J, self.g, self.tol = F, J, g, tol
        k = F.domain_dim
        self.structure = TensorField11(k, self._structure_coeff, name or f"sec*T[{J.name}]")
        self.metric = MetricSpec(k, field=self._gram)

    def report(self, u) -> SlantReport:
        return slant_at(frame_at(self.F, u, self.g), self.J, self.g, self.tol)

    def guard(self, u) -> SlantReport:
        rep = self.report(u)
        if rep.classification == NOT_SLANT:
            raise UndefinedStructureError(u, f"not slant (spread {rep.spread:.3e})")
        if rep.classification == INVARIANT:
            raise UndefinedStructureError(u, "invariant point (θ = 0)")
        if rep.classification == ANTI_INVARIANT or rep.cos_theta < self.tol.spectral:
            raise UndefinedStructureError(u, "θ is π/2 (not proper)")
        return rep

    def _jet_parts(self, u):
        x, E = frame_jets(self.F, u)
        gA = self.g.at(x)
        M = E.T @ np.asarray(gA, dtype=object) @ self.J.matrix(x) @ E
        G = E.T @ np.asarray(gA, dtype=object) @ E
        C = nk.jet_solve(G, M)
        k = C.shape[0]
        cos2 = sum(np.diag(nk.jet_solve(G, C.T @ G @ C))) / k
        return C, cos2, G

    def _is_jet(self, u):
        return nk.is_jet_array(list(u))

    def tangent_coeff(self, u):
        """T as a k×k coefficient field."""
        if self._is_jet(u):
            self.guard([nk.value_of(v) for v in u])
            return self._jet_parts(u)[0]
        return self.guard(u).C

    def cos2(self, u):
        if self._is_jet(u):
            self.guard([nk.value_of(v) for v in u])
            return self._jet_parts(u)[1]
        return self.guard(u).mean

    def theta(self, u):
        return nk.arccos(nk.sqrt(self.cos2(u)))

    def _structure_coeff(self, u):
        if self._is_jet(u):
            self.guard([nk.value_of(v) for v in u])
            C, cos2, _ = self._jet_parts(u)
            return C / nk.sqrt(cos2)
        rep = self.guard(u)
        return rep.C / math.sqrt(rep.mean)

    def _gram(self, u):
        if self._is_jet(u):
            x, E = frame_jets(self.F, u)
            return E.T @ np.asarray(self.g.at(x), dtype=object) @ E
        return frame_at(self.F, u, self.g).gram


def induced_geometry(F: Immersion, J1: TensorField11, g: MetricSpec, tol: Tolerances = DEFAULT_TOL):
    return InducedGeometry(F, J1, g, tol)


def induced_structure(F: Immersion, J1: TensorField11, g: MetricSpec, tol: Tolerances = DEFAULT_TOL):
    """J₂ = sec θ₁·T₁ on the parameter space of F."""
    return InducedGeometry(F, J1, g, tol).structure


@dataclass
class KahlerResult:
    r1: float
    r2: float
    theta: float
    x_theta: float
    sec_theta: float
    nabla_structure: np.ndarray = None
    nabla_tangent: np.ndarray = None
    r2_vector: np.ndarray = None

    @property
    def consistency(self) -> float:
        """|r1 − sec θ·r2|; the two residuals differ exactly by that factor."""
        return abs(self.r1 - self.sec_theta * self.r2)

    def verdicts_agree(self, tol) -> bool:
        return (self.r1 <= tol) == (self.r2 <= tol)


def _g_norm(v, G):
    return math.sqrt(max(float(v @ G @ v), 0.0))


def kahler_condition_check(F: Immersion, J1: TensorField11, g: MetricSpec, u, Xc: Callable, Yc: Callable,
                           tol: Tolerances = DEFAULT_TOL) -> KahlerResult:
    """r1 = ‖(∇_X J₂)Y‖ and r2 = ‖(∇_X T)Y + tan θ·X(θ)·TY‖ on the immersed manifold."""
    if not g.is_constant:
        raise ValueError("Kähler check needs a constant ambient metric")
    u = np.asarray(u, dtype=float)
    geo = InducedGeometry(F, J1, g, tol)
    rep = geo.guard(u)
    G = rep.gram
    Xv = nk.as_vector(Xc(list(u))).astype(float)

    def nabla(Z):
        zv, DZ, _ = nk.jet_eval(Z, u)
        return DZ @ Xv + gauss_correction(F, u, Xv, zv, g)

    def apply(coeff):
        return lambda w: coeff(w) @ nk.as_vector(Yc(w))

    J2 = geo._structure_coeff(u)
    T = rep.C
    nY = nabla(Yc)
    nJ2Y = nabla(apply(geo._structure_coeff)) - J2 @ nY
    nTY = nabla(apply(geo.tangent_coeff)) - T @ nY
    theta = rep.theta
    dtheta = float(nk.jacobian(lambda w: [geo.theta(w)], u)[0] @ Xv)
    Yv = nk.as_vector(Yc(list(u))).astype(float)
    r2vec = nTY + math.tan(theta) * dtheta * (T @ Yv)
    return KahlerResult(_g_norm(nJ2Y, G), _g_norm(r2vec, G), theta, dtheta, 1.0 / math.cos(theta), nJ2Y, nTY, r2vec)


@dataclass
class ChainPoint:
    param: list
    cos_stages: list
    cos_tilde: float | None
    residual: float | None
    classes: list
    class_tilde: str


@dataclass
class ChainReport:
    points: list = field(default_factory=list)
    exclusions: list = field(default_factory=list)
    max_residual: float = 0.0
    bound_failures: list = field(default_factory=list)
    anti_invariance_failures: list = field(default_factory=list)


def transitivity_chain_check(Fs: Sequence[Immersion], J1: TensorField11, g: MetricSpec, grid,
                             tol: Tolerances = DEFAULT_TOL, on_violation: str = "raise") -> ChainReport:
    """Slant angle of F₁∘…∘F_k against the product of stage angles.

    Stage i analyses Fᵢ inside the parameter space of Fᵢ₋₁ equipped with the
    induced metric and J_i = sec θᵢ₋₁·T_{i−1}.  Intermediate stages must be
    proper; a violation raises :class:`HypothesisError` or, with
    ``on_violation="exclude"``, is recorded as an exclusion.
    """
    Fs = list(Fs)
    if not Fs:
        raise ValueError("empty chain")
    for outer, inner in zip(Fs, Fs[1:]):
        if inner.ambient_dim != outer.domain_dim:
            raise DimensionError(f"{inner.name} maps into dimension {inner.ambient_dim}, "
                                 f"but {outer.name} has {outer.domain_dim} parameters")
    ambients = [(J1, g)]
    geos = []
    for F in Fs[:-1]:
        Jc, gc = ambients[-1]
        geo = InducedGeometry(F, Jc, gc, tol)
        geos.append(geo)
        ambients.append((geo.structure, geo.metric))
    composite = Fs[0]
    for F in Fs[1:]:
        composite = compose(composite, F)

    out = ChainReport()
    k = len(Fs)
    for u in grid:
        u = np.asarray(u, dtype=float)
        params = [None] * k
        params[-1] = u
        for i in range(k - 2, -1, -1):
            params[i] = Fs[i + 1].point(params[i + 1])
        try:
            reps = []
            for i, F in enumerate(Fs):
                Jc, gc = ambients[i]
                if i < k - 1:
                    reps.append(geos[i].guard(params[i]))
                else:
                    reps.append(slant_at(frame_at(F, params[i], gc), Jc, gc, tol))
            if not reps[-1].is_slant:
                raise HypothesisError(k, params[-1], f"last stage not slant (spread {reps[-1].spread:.3e})")
            tilde = slant_at(frame_at(composite, u, g), J1, g, tol)
        except UndefinedStructureError as exc:
            stage = next((i + 1 for i in range(k - 1) if params[i] is not None and
                          np.array_equal(np.asarray(exc.param), params[i])), 0)
            err = HypothesisError(stage, exc.param, exc.reason)
            if on_violation == "raise":
                raise err from None
            out.exclusions.append(Exclusion(u.tolist(), str(err)))
            continue
        except HypothesisError as err:
            if on_violation == "raise":
                raise
            out.exclusions.append(Exclusion(u.tolist(), str(err)))
            continue
        except (DegenerateFrameError, nk.NumericalError) as exc:
            if on_violation == "raise":
                raise
            out.exclusions.append(Exclusion(u.tolist(), str(exc)))
            continue
        cos_stages = [r.cos_theta for r in reps]
        prod = math.prod(cos_stages)
        res = abs(tilde.cos_theta - prod) if tilde.is_slant else None
        out.points.append(ChainPoint(u.tolist(), cos_stages, tilde.cos_theta, res,
                                     [r.classification for r in reps], tilde.classification))
        if res is None:
            out.max_residual = math.inf
            continue
        out.max_residual = max(out.max_residual, res)
        if tilde.theta < max(r.theta for r in reps) - tol.spectral:
            out.bound_failures.append(u.tolist())
        if reps[-1].classification == ANTI_INVARIANT and tilde.classification != ANTI_INVARIANT:
            out.anti_invariance_failures.append(u.tolist())
    return out


def transitivity_check(F1: Immersion, F2: Immersion, J1: TensorField11, g: MetricSpec, grid,
                       tol: Tolerances = DEFAULT_TOL, on_violation: str = "raise") -> ChainReport:
    """cos θ̃₁ = cos θ₁·cos θ₂ for M₃ ⊂ M₂ ⊂ M₁."""
    return transitivity_chain_check([F1, F2], J1, g, grid, tol, on_violation)


# -- products -------------------------------------------------------------------------


@dataclass
class ProductPoint:
    param: list
    factor_cos: list
    factor_classes: list
    classification: str
    spread: float
    cos_theta: float | None


@dataclass
class ProductReport:
    mode: str
    points: list = field(default_factory=list)
    exclusions: list = field(default_factory=list)
    pointwise_failures: list = field(default_factory=list)
    all_slant: bool = True
    factors_constant_equal: bool = True

    @property
    def consistent(self) -> bool:
        """Product slant over the grid ⟺ factor angles constant and equal (distinct-ambients mode)."""
        if self.mode != "distinct-ambients":
            return True
        return not self.pointwise_failures and self.all_slant == self.factors_constant_equal


def block_metric(metrics: Sequence[MetricSpec]) -> MetricSpec:
    dims = [m.dim for m in metrics]
    n = sum(dims)
    offs = np.concatenate([[0], np.cumsum(dims)]).astype(int)
    if all(m.is_constant for m in metrics):
        G = np.zeros((n, n))
        for i, m in enumerate(metrics):
            G[offs[i]:offs[i + 1], offs[i]:offs[i + 1]] = m.gram
        return MetricSpec(n, G)

    def field_(x):
        x = list(x)
        blocks = [np.asarray(m.at(x[offs[i]:offs[i + 1]])) for i, m in enumerate(metrics)]
        obj = any(b.dtype == object for b in blocks)
        G = np.zeros((n, n), dtype=object if obj else float)
        for i, b in enumerate(blocks):
            G[offs[i]:offs[i + 1], offs[i]:offs[i + 1]] = b
        return G

    return MetricSpec(n, field=field_)


def product_check(parts: Sequence[tuple], mode: str, grid, tol: Tolerances = DEFAULT_TOL) -> ProductReport:
    """Analyse M₁×…×M_k in the direct-sum ambient with the block structure.

    ``parts`` holds (immersion, structure, metric) triples.  In
    ``"distinct-ambients"`` mode the product is checked to be slant at a point
    exactly when the factor angles agree there, and slant over the whole grid
    exactly when the factor angles are constant and equal.  In
    ``"same-ambient"`` mode only the per-point tuple of factor angles is
    reported.
    """
    if mode not in ("same-ambient", "distinct-ambients"):
        raise ValueError(f"unknown product mode {mode!r}")
    parts = list(parts)
    for F, J, m in parts:
        if not (F.ambient_dim == J.dim == m.dim):
            raise DimensionError(f"factor {F.name}: immersion target {F.ambient_dim}, structure {J.dim}, "
                                 f"metric {m.dim}")
    if mode == "same-ambient" and len({F.ambient_dim for F, _, _ in parts}) > 1:
        raise DimensionError("same-ambient mode needs factors in one ambient dimension")
    P = product_immersion([F for F, _, _ in parts])
    Jp = block_sum([J for _, J, _ in parts])
    gp = block_metric([m for _, _, m in parts])
    offs = np.concatenate([[0], np.cumsum([F.domain_dim for F, _, _ in parts])]).astype(int)
    out = ProductReport(mode)
    factor_means = [[] for _ in parts]
    for u in grid:
        u = np.asarray(u, dtype=float)
        try:
            freps = [slant_at(frame_at(F, u[offs[i]:offs[i + 1]], m), J, m, tol)
                     for i, (F, J, m) in enumerate(parts)]
            prep = slant_at(frame_at(P, u, gp), Jp, gp, tol)
        except (DegenerateFrameError, nk.NumericalError) as exc:
            out.exclusions.append(Exclusion(u.tolist(), str(exc)))
            continue
        out.points.append(ProductPoint(u.tolist(), [r.cos_theta for r in freps],
                                       [r.classification for r in freps], prep.classification,
                                       prep.spread, prep.cos_theta))
        for i, r in enumerate(freps):
            factor_means[i].append(r.mean if r.is_slant else math.nan)
        all_f_slant = all(r.is_slant for r in freps)
        means = [r.mean for r in freps]
        equal_here = all_f_slant and max(means) - min(means) <= tol.spectral
        if mode == "distinct-ambients" and prep.is_slant != equal_here:
            out.pointwise_failures.append(u.tolist())
        out.all_slant = out.all_slant and prep.is_slant
    flat = [v for col in factor_means for v in col]
    out.factors_constant_equal = bool(flat) and not any(math.isnan(v) for v in flat) and \
        max(flat) - min(flat) <= tol.spectral
    return out
