"""Second-order forward-mode jets, small dense linear algebra and Jacobi eigensolvers.

Everything here is a pure function of its inputs.  Maps handed to
:func:`jacobian` and friends take a sequence of scalars and return a sequence
of scalars; the scalars may be plain floats or :class:`Jet2` values, so the
same map serves both plain evaluation and differentiation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

STRUCT_TOL = 1e-9
SPECTRAL_TOL = 1e-7
FD_TOL = 1e-6

JACOBI_OFF_TOL = 1e-13
JACOBI_MAX_SWEEPS = 100
CHOLESKY_PIVOT_TOL = 1e-12


@dataclass(frozen=True)
class Tolerances:
    struct: float = STRUCT_TOL
    spectral: float = SPECTRAL_TOL
    fd: float = FD_TOL

    def as_dict(self) -> dict:
        return {"STRUCT_TOL": self.struct, "SPECTRAL_TOL": self.spectral, "FD_TOL": self.fd}


DEFAULT_TOL = Tolerances()


class NumericalError(ArithmeticError):
    """Base class for numerical failures in the engine."""


class EvaluationDomainError(NumericalError):
    """A map produced a non-finite value or derivative."""


class ConvergenceError(NumericalError):
    pass


class NotPositiveDefiniteError(NumericalError):
    pass


def _broadcast(op):
    """Let a jet combine elementwise with an ndarray operand."""

    def wrapped(self, other):
        if isinstance(other, np.ndarray):
            out = np.empty(other.shape, dtype=object)
            for idx in np.ndindex(other.shape):
                out[idx] = op(self, other[idx])
            return out
        return op(self, other)

    wrapped.__name__ = op.__name__
    return wrapped


class Jet2:
    """Scalar carrying its value, gradient and Hessian against ``d`` seed directions."""

    __slots__ = ("value", "grad", "hess")
    # keep numpy from swallowing binary ops with numpy scalars
    __array_ufunc__ = None

    def __init__(self, value, grad, hess):
        self.value = float(value)
        self.grad = grad
        self.hess = hess

    @classmethod
    def constant(cls, value, d):
        return cls(value, np.zeros(d), np.zeros((d, d)))

    @property
    def dim(self):
        return self.grad.shape[0]

    def __repr__(self):
        return f"Jet2({self.value!r}, grad={self.grad.tolist()!r})"

    def _chain(self, f, df, d2f):
        g = self.grad
        return Jet2(f, df * g, df * self.hess + d2f * np.outer(g, g))

    def __neg__(self):
        return Jet2(-self.value, -self.grad, -self.hess)

    def __pos__(self):
        return self

    @_broadcast
    def __add__(self, other):
        if isinstance(other, Jet2):
            return Jet2(self.value + other.value, self.grad + other.grad, self.hess + other.hess)
        return Jet2(self.value + float(other), self.grad, self.hess)

    __radd__ = __add__

    @_broadcast
    def __sub__(self, other):
        if isinstance(other, Jet2):
            return Jet2(self.value - other.value, self.grad - other.grad, self.hess - other.hess)
        return Jet2(self.value - float(other), self.grad, self.hess)

    @_broadcast
    def __rsub__(self, other):
        if isinstance(other, Jet2):
            return other - self
        return Jet2(float(other) - self.value, -self.grad, -self.hess)

    @_broadcast
    def __mul__(self, other):
        if isinstance(other, Jet2):
            a, b = self, other
            cross = np.outer(a.grad, b.grad)
            return Jet2(
                a.value * b.value,
                a.value * b.grad + b.value * a.grad,
                a.value * b.hess + b.value * a.hess + (cross + cross.T),
            )
        c = float(other)
        return Jet2(self.value * c, self.grad * c, self.hess * c)

    __rmul__ = __mul__

    def reciprocal(self):
        v = self.value
        if v == 0.0 or v * v * v == 0.0:
            raise EvaluationDomainError(f"division by {v!r}")
        return self._chain(1.0 / v, -1.0 / (v * v), 2.0 / (v * v * v))

    @_broadcast
    def __truediv__(self, other):
        if isinstance(other, Jet2):
            return self * other.reciprocal()
        c = float(other)
        return Jet2(self.value / c, self.grad / c, self.hess / c)

    @_broadcast
    def __rtruediv__(self, other):
        if isinstance(other, Jet2):
            return other * self.reciprocal()
        return self.reciprocal() * float(other)

    def __pow__(self, p):
        if isinstance(p, Jet2):
            raise TypeError("jet exponents are not supported")
        v = self.value
        if float(p).is_integer():
            n = int(p)
            if n == 0:
                return Jet2.constant(1.0, self.dim)
            if n < 0:
                return (self ** (-n)).reciprocal()
            df = n * v ** (n - 1)
            d2f = n * (n - 1) * v ** (n - 2) if n >= 2 else 0.0
            return self._chain(v**n, df, d2f)
        p = float(p)
        return self._chain(v**p, p * v ** (p - 1), p * (p - 1) * v ** (p - 2))

    def __abs__(self):
        s = math.copysign(1.0, self.value) if self.value != 0.0 else 0.0
        return self._chain(abs(self.value), s, 0.0)


# -- elementary functions, dispatching on float vs jet ----------------------


def _unary(fn, d1, d2):
    def apply(x):
        if isinstance(x, Jet2):
            v = x.value
            return x._chain(fn(v), d1(v), d2(v))
        return fn(float(x))

    apply.__name__ = fn.__name__
    return apply


def _safe_sqrt(v):
    if v < 0.0:
        raise EvaluationDomainError(f"sqrt of negative value {v!r}")
    return math.sqrt(v)


def _safe_acos(v):
    if not -1.0 <= v <= 1.0:
        raise EvaluationDomainError(f"arccos outside [-1, 1]: {v!r}")
    return math.acos(v)


def _inf_div(num, den):
    return num / den if den != 0.0 else math.inf


sin = _unary(math.sin, math.cos, lambda v: -math.sin(v))
cos = _unary(math.cos, lambda v: -math.sin(v), lambda v: -math.cos(v))
tan = _unary(math.tan, lambda v: 1.0 / math.cos(v) ** 2, lambda v: 2.0 * math.tan(v) / math.cos(v) ** 2)
sec = _unary(
    lambda v: 1.0 / math.cos(v),
    lambda v: math.tan(v) / math.cos(v),
    lambda v: (1.0 + 2.0 * math.tan(v) ** 2) / math.cos(v),
)
sqrt = _unary(
    _safe_sqrt,
    lambda v: _inf_div(0.5, math.sqrt(v)),
    lambda v: _inf_div(-0.25, v * math.sqrt(v)),
)
arccos = _unary(
    _safe_acos,
    lambda v: _inf_div(-1.0, math.sqrt(1.0 - v * v)),
    lambda v: _inf_div(-v, (1.0 - v * v) ** 1.5),
)
exp = _unary(math.exp, math.exp, math.exp)


def fabs(x):
    return abs(x) if isinstance(x, Jet2) else abs(float(x))


def value_of(x) -> float:
    return x.value if isinstance(x, Jet2) else float(x)


def values_of(xs) -> np.ndarray:
    return np.array([value_of(x) for x in np.ravel(np.asarray(xs, dtype=object))]).reshape(np.shape(xs))


def is_jet_array(xs) -> bool:
    return any(isinstance(x, Jet2) for x in np.ravel(np.asarray(xs, dtype=object)))


# -- seeding and derivative extraction --------------------------------------


def seed(point, directions=None) -> list[Jet2]:
    """Jets for ``point`` whose gradients are the rows of ``directions`` (default identity)."""
    point = np.asarray(point, dtype=float)
    n = point.shape[0]
    D = np.eye(n) if directions is None else np.asarray(directions, dtype=float)
    d = D.shape[1]
    return [Jet2(point[i], D[i].copy(), np.zeros((d, d))) for i in range(n)]


def _grad(x, d):
    return x.grad if isinstance(x, Jet2) else np.zeros(d)


def _hess(x, d):
    return x.hess if isinstance(x, Jet2) else np.zeros((d, d))


def jet_eval(fn: Callable, point):
    """Value, Jacobian (m×d) and second derivatives (m×d×d) of ``fn`` at ``point``."""
    point = np.asarray(point, dtype=float)
    d = point.shape[0]
    out = list(fn(seed(point)))
    val = np.array([value_of(y) for y in out])
    jac = np.array([_grad(y, d) for y in out]).reshape(len(out), d)
    hess = np.array([_hess(y, d) for y in out]).reshape(len(out), d, d)
    if not (np.all(np.isfinite(val)) and np.all(np.isfinite(jac))):
        raise EvaluationDomainError(f"non-finite evaluation at {point.tolist()}")
    return val, jac, hess


def jacobian(fn: Callable, point) -> np.ndarray:
    """∂fnᵢ/∂xⱼ at ``point``, exact up to rounding for polynomial maps."""
    return jet_eval(fn, point)[1]


def lie_bracket(X: Callable, Y: Callable, x) -> np.ndarray:
    """[X, Y](x) = (DY)x·X(x) − (DX)x·Y(x) for vector fields on ℝⁿ."""
    xv, DX, _ = jet_eval(X, x)
    yv, DY, _ = jet_eval(Y, x)
    return DY @ xv - DX @ yv


# -- dense linear algebra ----------------------------------------------------


@dataclass(frozen=True)
class SymEig:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def _off_norm(A):
    off = A - np.diag(np.diag(A))
    return float(np.linalg.norm(off))


def sym_eig(A) -> SymEig:
    """Cyclic Jacobi eigendecomposition of a symmetric matrix, eigenvalues ascending."""
    A = np.array(A, dtype=float)
    A = 0.5 * (A + A.T)
    k = A.shape[0]
    V = np.eye(k)
    norm = float(np.linalg.norm(A))
    target = JACOBI_OFF_TOL * norm
    for _ in range(JACOBI_MAX_SWEEPS):
        if _off_norm(A) <= target:
            break
        for p in range(k - 1):
            for q in range(p + 1, k):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                tau = (A[q, q] - A[p, p]) / (2.0 * apq)
                if abs(tau) > 1e150:
                    t = 0.5 / tau
                else:
                    t = math.copysign(1.0, tau) / (abs(tau) + math.sqrt(1.0 + tau * tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                R = np.eye(k)
                R[p, p] = R[q, q] = c
                R[p, q] = s
                R[q, p] = -s
                A = R.T @ A @ R
                A[p, q] = A[q, p] = 0.0
                V = V @ R
    else:
        if _off_norm(A) > target:
            raise ConvergenceError(f"Jacobi did not converge in {JACOBI_MAX_SWEEPS} sweeps")
    lam = np.diag(A).copy()
    order = np.argsort(lam, kind="stable")
    return SymEig(lam[order], V[:, order])


def cholesky(G) -> np.ndarray:
    """Lower-triangular L with G = L·Lᵀ; rejects pivots below 1e-12·‖G‖."""
    G = np.asarray(G, dtype=float)
    k = G.shape[0]
    floor = CHOLESKY_PIVOT_TOL * float(np.linalg.norm(G))
    L = np.zeros((k, k))
    for j in range(k):
        piv = G[j, j] - float(L[j, :j] @ L[j, :j])
        if not piv > floor:
            raise NotPositiveDefiniteError(f"pivot {piv:.3e} at column {j} is not positive")
        L[j, j] = math.sqrt(piv)
        for i in range(j + 1, k):
            L[i, j] = (G[i, j] - float(L[i, :j] @ L[j, :j])) / L[j, j]
    return L


def forward_sub(L, B) -> np.ndarray:
    L = np.asarray(L, dtype=float)
    B = np.array(B, dtype=float)
    vec = B.ndim == 1
    if vec:
        B = B[:, None]
    X = np.zeros_like(B)
    for i in range(L.shape[0]):
        X[i] = (B[i] - L[i, :i] @ X[:i]) / L[i, i]
    return X[:, 0] if vec else X


def back_sub(U, B) -> np.ndarray:
    U = np.asarray(U, dtype=float)
    B = np.array(B, dtype=float)
    vec = B.ndim == 1
    if vec:
        B = B[:, None]
    X = np.zeros_like(B)
    for i in reversed(range(U.shape[0])):
        X[i] = (B[i] - U[i, i + 1 :] @ X[i + 1 :]) / U[i, i]
    return X[:, 0] if vec else X


def cho_solve(L, B) -> np.ndarray:
    return back_sub(L.T, forward_sub(L, B))


def reduce_pencil(A, L) -> np.ndarray:
    """L⁻¹·A·L⁻ᵀ, symmetrized."""
    B = forward_sub(L, forward_sub(L, np.asarray(A, dtype=float)).T)
    return 0.5 * (B + B.T)


def gen_sym_eig(A, G, L=None) -> SymEig:
    """Solve A·v = λ·G·v for symmetric A and SPD G; eigenvectors are G-orthonormal."""
    if L is None:
        L = cholesky(G)
    eig = sym_eig(reduce_pencil(A, L))
    return SymEig(eig.eigenvalues, back_sub(L.T, eig.eigenvectors))


def pencil_mean(A, G, L=None) -> float:
    """trace(G⁻¹A)/k, evaluated as the trace of the reduced pencil."""
    if L is None:
        L = cholesky(G)
    B = reduce_pencil(A, L)
    return float(np.trace(B)) / B.shape[0]


def jet_solve(A, B):
    """Gaussian elimination with partial pivoting that works on jet (object) arrays."""
    A = np.array(A, dtype=object)
    B = np.array(B, dtype=object)
    vec = B.ndim == 1
    if vec:
        B = B[:, None]
    n = A.shape[0]
    for col in range(n):
        piv = max(range(col, n), key=lambda r: abs(value_of(A[r, col])))
        if value_of(A[piv, col]) == 0.0:
            raise NotPositiveDefiniteError("singular system")
        if piv != col:
            A[[col, piv]] = A[[piv, col]]
            B[[col, piv]] = B[[piv, col]]
        for r in range(col + 1, n):
            f = A[r, col] / A[col, col]
            A[r, col:] = A[r, col:] - f * A[col, col:]
            B[r] = B[r] - f * B[col]
    X = np.empty(B.shape, dtype=object)
    for i in reversed(range(n)):
        acc = B[i]
        for j in range(i + 1, n):
            acc = acc - A[i, j] * X[j]
        X[i] = acc / A[i, i]
    return X[:, 0] if vec else X


def as_vector(seq: Sequence) -> np.ndarray:
    """Array from a map's output; object dtype if any entry is a jet."""
    items = list(seq)
    if any(isinstance(v, Jet2) for v in items):
        return np.array(items, dtype=object)
    return np.array([float(v) for v in items])
