"""Parametrized immersions: frames, induced metrics, tangential parts of
structures, and the induced connection via the Gauss formula.

Frames are the raw Jacobian columns; nothing is orthonormalized, all geometry
goes through the induced Gram matrix G = Eᵀ·g·E.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import numkit as nk
from .structures import DimensionError, MetricSpec, TensorField11


class DegenerateFrameError(nk.NumericalError):
    """The Jacobian is rank deficient at a parameter point."""

    def __init__(self, param, reason=""):
        self.param = [float(v) for v in param]
        super().__init__(f"degenerate frame at parameter point {self.param}" + (f": {reason}" if reason else ""))


@dataclass(frozen=True)
class Immersion:
    domain_dim: int
    ambient_dim: int
    map: Callable
    name: str = "F"

    def __call__(self, u):
        return self.map(u)

    def point(self, u) -> np.ndarray:
        return np.array([nk.value_of(v) for v in self.map(list(map(float, u)))])


def immersion_from_components(components: Sequence[Callable], domain_dim: int, name="F") -> Immersion:
    comps = list(components)
    return Immersion(domain_dim, len(comps), lambda u: [f(u) for f in comps], name)


def linear_immersion(A, offset=None, name="F") -> Immersion:
    """u ↦ A·u + offset."""
    A = np.array(A, dtype=float)
    b = np.zeros(A.shape[0]) if offset is None else np.array(offset, dtype=float)

    def F(u):
        return list(A @ nk.as_vector(u) + b)

    return Immersion(A.shape[1], A.shape[0], F, name)


def compose(outer: Immersion, inner: Immersion, name=None) -> Immersion:
    """outer ∘ inner."""
    if inner.ambient_dim != outer.domain_dim:
        raise DimensionError(
            f"cannot compose {outer.name} (domain {outer.domain_dim}) with {inner.name} (target {inner.ambient_dim})"
        )
    return Immersion(inner.domain_dim, outer.ambient_dim, lambda u: outer(list(inner(u))),
                     name or f"{outer.name}o{inner.name}")


def product_immersion(parts: Sequence[Immersion], name=None) -> Immersion:
    """(u₁,…,u_k) ↦ (F₁(u₁),…,F_k(u_k))."""
    parts = list(parts)
    offs = np.concatenate([[0], np.cumsum([p.domain_dim for p in parts])]).astype(int)

    def F(u):
        u = list(u)
        out = []
        for i, p in enumerate(parts):
            out.extend(p(u[offs[i]:offs[i + 1]]))
        return out

    return Immersion(int(offs[-1]), sum(p.ambient_dim for p in parts), F, name or "x".join(p.name for p in parts))


@dataclass(frozen=True)
class PointFrame:
    param: np.ndarray
    ambient_point: np.ndarray
    frame: np.ndarray
    gram: np.ndarray
    chol: np.ndarray
    metric: np.ndarray

    @property
    def k(self):
        return self.frame.shape[1]


@dataclass(frozen=True)
class TangentOperator:
    """C with E·C = tangential projection of J·E; ``image`` holds J·E."""

    C: np.ndarray
    image: np.ndarray


def make_frame(param, ambient_point, E, g_ambient) -> PointFrame:
    E = np.asarray(E, dtype=float)
    gA = np.asarray(g_ambient, dtype=float)
    G = E.T @ gA @ E
    G = 0.5 * (G + G.T)
    try:
        L = nk.cholesky(G)
    except nk.NotPositiveDefiniteError as exc:
        raise DegenerateFrameError(param, str(exc)) from None
    return PointFrame(np.asarray(param, dtype=float), np.asarray(ambient_point, dtype=float), E, G, L, gA)


def frame_at(F: Immersion, u, g: MetricSpec) -> PointFrame:
    u = np.asarray(u, dtype=float)
    if u.shape != (F.domain_dim,):
        raise DimensionError(f"{F.name} expects {F.domain_dim} parameters, got {u.shape}")
    if g.dim != F.ambient_dim:
        raise DimensionError(f"metric dimension {g.dim} does not match ambient dimension {F.ambient_dim}")
    try:
        x, E, _ = nk.jet_eval(F.map, u)
    except nk.EvaluationDomainError as exc:
        raise DegenerateFrameError(u, str(exc)) from None
    return make_frame(u, x, E, g.at(x))


def tangential_operator(fr: PointFrame, J: TensorField11, g: MetricSpec | None = None) -> TangentOperator:
    """C = G⁻¹·Eᵀ·g·J(x)·E."""
    if J.dim != fr.frame.shape[0]:
        raise DimensionError(f"structure {J.name!r} has dimension {J.dim}, frame lives in {fr.frame.shape[0]}")
    gA = fr.metric if g is None else np.asarray(g.at(fr.ambient_point), dtype=float)
    JE = J.at(fr.ambient_point) @ fr.frame
    C = nk.cho_solve(fr.chol, fr.frame.T @ gA @ JE)
    return TangentOperator(C, JE)


def normal_residual(fr: PointFrame, J: TensorField11, g: MetricSpec | None, v) -> float:
    """‖JEv‖²_g − ‖Cv‖²_G, the squared norm of the normal part of J·(Ev)."""
    v = np.asarray(v, dtype=float)
    T = tangential_operator(fr, J, g)
    w = T.image @ v
    Cv = T.C @ v
    return float(w @ fr.metric @ w - Cv @ fr.gram @ Cv)


def frame_jets(F: Immersion, u):
    """Ambient point and frame as jets in the seeds carried by ``u``.

    The ambient point is exact to second order.  Frame entries carry exact
    first derivatives; their second-order slots are NaN because they would
    need third derivatives of F.
    """
    u_list = list(u)
    if not nk.is_jet_array(u_list):
        x, E, _ = nk.jet_eval(F.map, [float(v) for v in u_list])
        return x, E
    uval = np.array([nk.value_of(v) for v in u_list])
    d = next(v.dim for v in u_list if isinstance(v, nk.Jet2))
    ugrad = np.array([v.grad if isinstance(v, nk.Jet2) else np.zeros(d) for v in u_list])
    _, E, H = nk.jet_eval(F.map, uval)
    nan_h = np.full((d, d), np.nan)
    n, k = E.shape
    Ej = np.empty((n, k), dtype=object)
    for i in range(n):
        for j in range(k):
            Ej[i, j] = nk.Jet2(E[i, j], H[i, j] @ ugrad, nan_h)
    x = np.array(list(F(u_list)), dtype=object)
    return x, Ej


def gauss_correction(F: Immersion, u, Xv, Yv, g: MetricSpec) -> np.ndarray:
    """G⁻¹·Eᵀ·g·(∂²F[Y, X]), the Christoffel part of the induced connection."""
    x, E, H = nk.jet_eval(F.map, np.asarray(u, dtype=float))
    fr = make_frame(u, x, E, g.at(x))
    second = np.einsum("ijl,j,l->i", H, Yv, Xv)
    return nk.cho_solve(fr.chol, E.T @ fr.metric @ second)


def induced_covariant_derivative(F: Immersion, u, Xc: Callable, Yc: Callable,
                                 g: MetricSpec | None = None) -> np.ndarray:
    """Frame coordinates of ∇_X Y on the immersed manifold (flat constant-metric ambient).

    Equals the tangential projection of the ambient derivative of E·Y along
    E·X: D_X Y + G⁻¹Eᵀg(∂²F[Y, X]).
    """
    u = np.asarray(u, dtype=float)
    if g is None:
        g = MetricSpec(F.ambient_dim)
    if not g.is_constant:
        raise ValueError("the Gauss formula here assumes a constant ambient metric")
    Xv = nk.as_vector(Xc(list(u))).astype(float)
    yv, DY, _ = nk.jet_eval(Yc, u)
    return DY @ Xv + gauss_correction(F, u, Xv, yv, g)
