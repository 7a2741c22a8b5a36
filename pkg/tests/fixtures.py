"""Immersions and structures shared by the slant and acceptance tests."""

import numpy as np

from slantgeom.immersion import immersion_from_components, linear_immersion
from slantgeom.structures import MetricSpec, pair_shift, pair_twist, standard_complex

J1 = pair_shift()
J2 = pair_twist()
J = standard_complex(8)
g8 = MetricSpec(8)


def _poly(name, k, *comps):
    return immersion_from_components(list(comps), k, name)


# surface in R^8, slant under both J1 and J2
M1 = _poly("M1", 2,
           lambda u: 2 * u[0], lambda u: u[0], lambda u: u[0] ** 2, lambda u: u[0] + u[1],
           lambda u: u[0] - u[1], lambda u: 2 * u[1], lambda u: u[1], lambda u: u[1] ** 2)

# surface with orthogonal images, anti-invariant under J2
M2 = _poly("M2", 2,
           lambda u: 2 * u[0], lambda u: u[0], lambda u: u[0] ** 2, lambda u: 1.0 + 0 * u[0],
           lambda u: 2 * u[1], lambda u: u[1], lambda u: u[1] ** 2, lambda u: 1.0 + 0 * u[1])

# 4-fold with constant angle arccos(1/3) under J, and a surface inside it
F1 = linear_immersion([[1, 1, 0, 0], [1, -1, 0, 0], [0, 0, 1, 1], [0, 0, 1, -1],
                       [1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1]], name="F1")
F2 = linear_immersion([[1, 0], [1, 1], [1, -1], [0, 1]], name="F2")
F2_anti = linear_immersion([[2, 0], [0, 1], [0, 2], [1, 0]], name="F2anti")

# generic 4-fold in R^8
N = _poly("N", 4,
          lambda u: u[0], lambda u: u[1], lambda u: u[2], lambda u: u[3],
          lambda u: u[0] * u[1], lambda u: u[2] ** 2, lambda u: u[0] * u[3], lambda u: u[1] * u[2])


def e1_cos1(x1, x2):
    return 2 * abs(x1 + x2) / np.sqrt((4 * x1 ** 2 + 7) * (4 * x2 ** 2 + 7))


def e1_cos2(x1, x2):
    return 2 * abs(x1 - 1) / np.sqrt((4 * x1 ** 2 + 7) * (4 * x2 ** 2 + 7))


def e1_cross(x1, x2):
    return 4 * (x1 + x2) * (x1 - 1) / ((4 * x1 ** 2 + 7) * (4 * x2 ** 2 + 7))


def e2_cos1(x1, x2):
    return abs(4 * x1 * x2 + 5) / np.sqrt((4 * x1 ** 2 + 5) * (4 * x2 ** 2 + 5))


def square_grid(lo=-2.0, hi=2.0, n=5):
    t = np.linspace(lo, hi, n)
    return [np.array([a, b]) for a in t for b in t]


# -- finite-difference oracles for vector fields in flat coordinates --


def fd_jac(F, x, h=1e-5):
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h
        cols.append((np.asarray(F(x + e), float) - np.asarray(F(x - e), float)) / (2 * h))
    return np.array(cols).T


def fd_bracket(X, Y, x):
    return fd_jac(Y, x) @ np.asarray(X(x), float) - fd_jac(X, x) @ np.asarray(Y(x), float)


def fd_apply(J, X):
    return lambda x: J.at(np.asarray(x, float)) @ np.asarray(X(x), float)


def fd_nijenhuis(J, X, Y, x):
    M = J.at(np.asarray(x, float))
    JX, JY = fd_apply(J, X), fd_apply(J, Y)
    return fd_bracket(JX, JY, x) - M @ fd_bracket(JX, Y, x) - M @ fd_bracket(X, JY, x) + M @ M @ fd_bracket(X, Y, x)


def fd_fn_bracket(A, B, X, Y, x):
    Ma, Mb = A.at(np.asarray(x, float)), B.at(np.asarray(x, float))
    AX, AY, BX, BY = fd_apply(A, X), fd_apply(A, Y), fd_apply(B, X), fd_apply(B, Y)
    XY = fd_bracket(X, Y, x)
    return (fd_bracket(AX, BY, x) + fd_bracket(BX, AY, x) + Ma @ Mb @ XY + Mb @ Ma @ XY
            - Ma @ (fd_bracket(BX, Y, x) + fd_bracket(X, BY, x)) - Mb @ (fd_bracket(AX, Y, x) + fd_bracket(X, AY, x)))
