"""(1,1)-tensor fields on flat ℝⁿ: almost Hermitian checks, structure families,
Nijenhuis tensor, Frölicher–Nijenhuis bracket and the flat covariant derivative.

Vector fields are callables ``X(x) -> sequence of n scalars`` that accept jets,
so brackets can be formed by forward-mode differentiation.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import numkit as nk
from .numkit import DEFAULT_TOL, Tolerances

NORMALIZATION_TOL = 1e-12


class DimensionError(ValueError):
    pass


class NormalizationError(ValueError):
    """Coefficients violate Σ aᵢ² = 1 at some point."""

    def __init__(self, point, total):
        self.point = list(map(float, point))
        self.total = total
        super().__init__(f"coefficient normalization violated at {self.point}: sum of squares = {total!r}")


class AnticommutationError(ValueError):
    pass


def _matrix(coeff_out) -> np.ndarray:
    arr = np.asarray(coeff_out, dtype=object)
    if any(isinstance(v, nk.Jet2) for v in arr.ravel()):
        return arr
    return arr.astype(float)


@dataclass(frozen=True)
class TensorField11:
    """Smooth field x ↦ n×n coefficient matrix (columns are images of ∂/∂xⱼ)."""

    dim: int
    coeff: Callable
    name: str = "J"

    @classmethod
    def constant(cls, matrix, name="J"):
        M = np.array(matrix, dtype=float)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise DimensionError(f"structure {name!r} must be square, got shape {M.shape}")
        M.setflags(write=False)
        return cls(M.shape[0], lambda x, _M=M: _M, name)

    def at(self, x) -> np.ndarray:
        M = np.asarray(self.coeff(x))
        if M.dtype == object:
            return nk.values_of(M)
        return M.astype(float, copy=False)

    def matrix(self, x):
        """Coefficient matrix; an object array when ``x`` carries jets."""
        return _matrix(self.coeff(x))

    def apply(self, X: Callable) -> Callable:
        """The vector field x ↦ J(x)·X(x)."""
        return lambda x: self.matrix(x) @ nk.as_vector(X(x))


@dataclass(frozen=True)
class MetricSpec:
    """Ambient metric; constant by default, or a field for induced (intermediate) manifolds."""

    dim: int
    gram: np.ndarray | None = None
    field: Callable | None = None

    def __post_init__(self):
        if self.gram is None and self.field is None:
            object.__setattr__(self, "gram", np.eye(self.dim))
        if self.gram is not None:
            g = np.array(self.gram, dtype=float)
            if g.shape != (self.dim, self.dim):
                raise DimensionError(f"metric must be {self.dim}x{self.dim}, got {g.shape}")
            if np.abs(g - g.T).max() > NORMALIZATION_TOL * max(1.0, np.abs(g).max()):
                raise ValueError("metric gram matrix is not symmetric")
            nk.cholesky(g)
            g.setflags(write=False)
            object.__setattr__(self, "gram", g)

    @classmethod
    def euclidean(cls, n):
        return cls(n)

    @property
    def is_constant(self):
        return self.field is None

    def at(self, x):
        if self.field is None:
            return self.gram
        return self.field(x)


@dataclass(frozen=True)
class CoefficientFunctions:
    """Scalar fields a₁..a_k with Σ aᵢ² = 1."""

    funcs: tuple

    def __init__(self, funcs: Sequence):
        object.__setattr__(self, "funcs", tuple(_as_scalar_field(f) for f in funcs))

    def __len__(self):
        return len(self.funcs)

    def values(self, x):
        return [f(x) for f in self.funcs]

    def check(self, points, tol=NORMALIZATION_TOL):
        for p in points:
            total = math.fsum(nk.value_of(v) ** 2 for v in self.values(p))
            if abs(total - 1.0) > tol:
                raise NormalizationError(p, total)


def _as_scalar_field(f):
    if callable(f):
        return f
    c = float(f)
    return lambda x, _c=c: _c


def coordinate_field(i: int, n: int) -> Callable:
    e = np.zeros(n)
    e[i] = 1.0
    return lambda x, _e=e: _e


def constant_field(v) -> Callable:
    v = np.array(v, dtype=float)
    return lambda x, _v=v: _v


# -- presets on ℝ^{2m} with coordinates (u1, v1, ..., um, vm) ------------------


def _u(i):
    return 2 * (i - 1)


def _v(i):
    return 2 * i - 1


def _from_images(n, images, name):
    M = np.zeros((n, n))
    for src, (sign, dst) in images.items():
        M[dst, src] = sign
    return TensorField11.constant(M, name)


def standard_complex(n: int, name="J") -> TensorField11:
    """∂/∂uᵢ ↦ −∂/∂vᵢ, ∂/∂vᵢ ↦ ∂/∂uᵢ."""
    if n % 2:
        raise DimensionError("standard complex structure needs even dimension")
    images = {}
    for i in range(1, n // 2 + 1):
        images[_u(i)] = (-1.0, _v(i))
        images[_v(i)] = (1.0, _u(i))
    return _from_images(n, images, name)


def pair_shift(name="J1") -> TensorField11:
    """On ℝ⁸: ∂/∂uᵢ ↦ −∂/∂u_{i+2}, ∂/∂u_{i+2} ↦ ∂/∂uᵢ (i = 1, 2), likewise for v."""
    images = {}
    for i in (1, 2):
        for c in (_u, _v):
            images[c(i)] = (-1.0, c(i + 2))
            images[c(i + 2)] = (1.0, c(i))
    return _from_images(8, images, name)


def pair_twist(name="J2") -> TensorField11:
    """On ℝ⁸: ∂/∂uᵢ ↦ ∓∂/∂vᵢ, ∂/∂vᵢ ↦ ±∂/∂uᵢ with the sign flipped for i = 3, 4."""
    images = {}
    for i in (1, 2, 3, 4):
        s = 1.0 if i <= 2 else -1.0
        images[_u(i)] = (-s, _v(i))
        images[_v(i)] = (s, _u(i))
    return _from_images(8, images, name)


PRESETS = {
    "standard": standard_complex,
    "pair-shift": lambda n=8, name="J1": pair_shift(name),
    "pair-twist": lambda n=8, name="J2": pair_twist(name),
}


# -- pointwise algebraic checks ---------------------------------------------


@dataclass
class StructureReport:
    passed: bool
    worst_point: list | None
    residual: float
    residuals: list = field(default_factory=list)
    detail: dict = field(default_factory=dict)


def _check_dims(n, *Js):
    for J in Js:
        if J.dim != n:
            raise DimensionError(f"structure {J.name!r} has dimension {J.dim}, expected {n}")


def _collect(points, fn, tol):
    residuals = []
    worst, worst_pt = -1.0, None
    for p in points:
        r = fn(np.asarray(p, dtype=float))
        residuals.append(r)
        if r > worst:
            worst, worst_pt = r, list(map(float, p))
    worst = max(worst, 0.0)
    return StructureReport(worst <= tol, worst_pt, worst, residuals)


def verify_almost_hermitian(J: TensorField11, g: MetricSpec, pts, tol: Tolerances = DEFAULT_TOL):
    """‖J² + I‖ and ‖gJ + Jᵀg‖ at each point; the report carries the worse of the two."""
    _check_dims(g.dim, J)
    n = J.dim
    square, skew = [], []

    def residual(x):
        M = J.at(x)
        G = np.asarray(g.at(x), dtype=float)
        a = float(np.linalg.norm(M @ M + np.eye(n)))
        b = float(np.linalg.norm(G @ M + M.T @ G))
        square.append(a)
        skew.append(b)
        return max(a, b)

    rep = _collect(pts, residual, tol.struct)
    rep.detail = {"square_residual": max(square, default=0.0), "skew_residual": max(skew, default=0.0)}
    return rep


def verify_anticommute(J1: TensorField11, J2: TensorField11, pts, tol: Tolerances = DEFAULT_TOL):
    _check_dims(J1.dim, J2)

    def residual(x):
        A, B = J1.at(x), J2.at(x)
        return float(np.linalg.norm(A @ B + B @ A))

    return _collect(pts, residual, tol.struct)


# -- families -----------------------------------------------------------------


def _normalized_coeffs(c: CoefficientFunctions, x):
    vals = c.values(x)
    total = math.fsum(nk.value_of(v) ** 2 for v in vals)
    if abs(total - 1.0) > NORMALIZATION_TOL:
        raise NormalizationError([nk.value_of(t) for t in x], total)
    return vals


def build_family_k(Js: Sequence[TensorField11], c: CoefficientFunctions, points=None, name=None,
                   tol: Tolerances = DEFAULT_TOL) -> TensorField11:
    """x ↦ Σ aᵢ(x)Jᵢ(x) for pairwise anti-commuting structures and Σ aᵢ² = 1.

    Normalization and pairwise anticommutation are checked eagerly at
    ``points`` (the origin when omitted); normalization is re-checked at every
    later evaluation.
    """
    Js = list(Js)
    if not Js:
        raise ValueError("at least one structure is required")
    if len(Js) != len(c):
        raise ValueError(f"{len(Js)} structures but {len(c)} coefficient functions")
    n = Js[0].dim
    _check_dims(n, *Js)
    pts = [np.zeros(n)] if points is None else [np.asarray(p, dtype=float) for p in points]
    c.check(pts)
    for Ji, Jj in itertools.combinations(Js, 2):
        rep = verify_anticommute(Ji, Jj, pts, tol)
        if not rep.passed:
            raise AnticommutationError(
                f"{Ji.name!r} and {Jj.name!r} do not anti-commute (residual {rep.residual:.3e} at {rep.worst_point})"
            )

    def coeff(x):
        vals = _normalized_coeffs(c, x)
        total = None
        for a, J in zip(vals, Js):
            term = a * J.matrix(x)
            total = term if total is None else total + term
        return total

    label = name or "+".join(J.name for J in Js)
    return TensorField11(n, coeff, label)


def build_family(J1: TensorField11, J2: TensorField11, c: CoefficientFunctions, points=None, name=None,
                 tol: Tolerances = DEFAULT_TOL) -> TensorField11:
    """x ↦ a(x)J1(x) + b(x)J2(x)."""
    if len(c) != 2:
        raise ValueError("a binary family needs exactly two coefficient functions")
    return build_family_k([J1, J2], c, points, name or f"{J1.name},{J2.name}", tol)


def conjugated(J: TensorField11, Q: Callable, name=None) -> TensorField11:
    """x ↦ Q(x)·J(x)·Q(x)ᵀ for an orthogonal-matrix field Q."""

    def coeff(x):
        Qx = _matrix(Q(x))
        return Qx @ J.matrix(x) @ Qx.T

    return TensorField11(J.dim, coeff, name or f"Q{J.name}Qt")


def plane_rotation(n: int, i: int, j: int, angle: Callable) -> Callable:
    """Orthogonal field rotating the (i, j) coordinate plane by ``angle(x)``."""

    def Q(x):
        t = angle(x)
        c, s = nk.cos(t), nk.sin(t)
        M = np.eye(n).astype(object)
        M[i, i], M[i, j], M[j, i], M[j, j] = c, -s, s, c
        return M

    return Q


def composed(J1: TensorField11, J2: TensorField11, name=None) -> TensorField11:
    """Pointwise product x ↦ J1(x)·J2(x)."""
    _check_dims(J1.dim, J2)
    return TensorField11(J1.dim, lambda x: J1.matrix(x) @ J2.matrix(x), name or f"{J1.name}{J2.name}")


def block_sum(Js: Sequence[TensorField11], name=None) -> TensorField11:
    """Direct sum structure on ℝ^{n₁+…+n_k}, acting factor-wise."""
    dims = [J.dim for J in Js]
    offsets = np.concatenate([[0], np.cumsum(dims)])
    n = int(offsets[-1])

    def coeff(x):
        blocks = [J.matrix(list(x[offsets[i]:offsets[i + 1]])) for i, J in enumerate(Js)]
        obj = any(b.dtype == object for b in blocks)
        M = np.zeros((n, n), dtype=object if obj else float)
        for i, b in enumerate(blocks):
            M[offsets[i]:offsets[i + 1], offsets[i]:offsets[i + 1]] = b
        return M

    return TensorField11(n, coeff, name or "(+)".join(J.name for J in Js))


# -- differential operators ------------------------------------------------------


def _at(J, x):
    return J.at(np.asarray(x, dtype=float))


def nijenhuis(J: TensorField11, X: Callable, Y: Callable, x) -> np.ndarray:
    """N_J(X,Y) = [JX,JY] − J[JX,Y] − J[X,JY] + J²[X,Y]."""
    JX, JY = J.apply(X), J.apply(Y)
    M = _at(J, x)
    br = nk.lie_bracket
    return br(JX, JY, x) - M @ br(JX, Y, x) - M @ br(X, JY, x) + M @ (M @ br(X, Y, x))


def fn_bracket(J1: TensorField11, J2: TensorField11, X: Callable, Y: Callable, x,
               simplified: bool = False) -> np.ndarray:
    """Frölicher–Nijenhuis bracket [J1,J2](X,Y).

    The default evaluates the full eight-term expression.  ``simplified=True``
    drops the J1J2[X,Y] + J2J1[X,Y] pair, which is only valid when the two
    structures anti-commute.
    """
    br = nk.lie_bracket
    A, B = _at(J1, x), _at(J2, x)
    J1X, J1Y, J2X, J2Y = J1.apply(X), J1.apply(Y), J2.apply(X), J2.apply(Y)
    out = br(J1X, J2Y, x) + br(J2X, J1Y, x)
    if not simplified:
        XY = br(X, Y, x)
        out = out + A @ (B @ XY) + B @ (A @ XY)
    out = out - A @ (br(J2X, Y, x) + br(X, J2Y, x)) - B @ (br(J1X, Y, x) + br(X, J1Y, x))
    return out


def decomposition_check(J1: TensorField11, J2: TensorField11, a: float, b: float,
                        X: Callable, Y: Callable, pts) -> float:
    """max over pts of ‖N_{aJ1+bJ2} − a²N_{J1} − b²N_{J2} − ab[J1,J2]‖ (a, b constant)."""
    c = CoefficientFunctions([a, b])
    pts = [np.asarray(p, dtype=float) for p in pts]
    Jab = build_family(J1, J2, c, points=pts[:1] or None)
    worst = 0.0
    for x in pts:
        lhs = nijenhuis(Jab, X, Y, x)
        rhs = a * a * nijenhuis(J1, X, Y, x) + b * b * nijenhuis(J2, X, Y, x) + a * b * fn_bracket(J1, J2, X, Y, x)
        worst = max(worst, float(np.linalg.norm(lhs - rhs)))
    return worst


def nabla_J(J: TensorField11, X: Callable, Y: Callable, x) -> np.ndarray:
    """(∇_X J)Y = D_X(J·Y) − J·(D_X Y) for the flat connection."""
    xv = nk.as_vector(X(list(map(float, x))))
    D_JY = nk.jacobian(J.apply(Y), x)
    D_Y = nk.jacobian(Y, x)
    return D_JY @ xv - _at(J, x) @ (D_Y @ xv)
