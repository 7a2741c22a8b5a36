import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fixtures import fd_fn_bracket, fd_nijenhuis
from slantgeom import numkit as nk
from slantgeom.structures import (
    AnticommutationError,
    CoefficientFunctions,
    DimensionError,
    MetricSpec,
    NormalizationError,
    TensorField11,
    block_sum,
    build_family,
    build_family_k,
    composed,
    conjugated,
    decomposition_check,
    fn_bracket,
    nabla_J,
    nijenhuis,
    pair_shift,
    pair_twist,
    plane_rotation,
    standard_complex,
    verify_almost_hermitian,
    verify_anticommute,
)

# coordinate order (u1, v1, u2, v2, u3, v3, u4, v4)
U = {i: 2 * (i - 1) for i in range(1, 5)}
V = {i: 2 * i - 1 for i in range(1, 5)}


def vec(**terms):
    out = np.zeros(8)
    for k, v in terms.items():
        idx = U[int(k[1])] if k[0] == "u" else V[int(k[1])]
        out[idx] = v
    return out


J1, J2 = pair_shift(), pair_twist()
g8 = MetricSpec(8)
rng = np.random.default_rng(42)
ambient_pts = [rng.uniform(-2, 2, 8) for _ in range(6)]


@pytest.mark.parametrize("x1,x2", [(0.0, 0.0), (1.5, -0.5), (-2.0, 1.0)])
def test_first_example_images(x1, x2):
    X1 = vec(u1=2, v1=1, u2=2 * x1, v2=1, u3=1)
    X2 = vec(v2=1, u3=-1, v3=2, u4=1, v4=2 * x2)
    A, B = J1.at(np.zeros(8)), J2.at(np.zeros(8))
    assert np.array_equal(A @ X1, vec(u1=1, u3=-2, v3=-1, u4=-2 * x1, v4=-1))
    assert np.array_equal(A @ X2, vec(u1=-1, v1=2, u2=1, v2=2 * x2, v4=-1))
    assert np.array_equal(B @ X1, vec(u1=1, v1=-2, u2=1, v2=-2 * x1, v3=1))
    assert np.array_equal(B @ X2, vec(u2=1, u3=-2, v3=-1, u4=-2 * x2, v4=1))


@pytest.mark.parametrize("x1,x2", [(0.0, 0.0), (1.0, -1.0)])
def test_second_example_images(x1, x2):
    X1 = vec(u1=2, v1=1, u2=2 * x1)
    X2 = vec(u3=2, v3=1, u4=2 * x2)
    A, B = J1.at(np.zeros(8)), J2.at(np.zeros(8))
    assert np.array_equal(A @ X1, vec(u3=-2, v3=-1, u4=-2 * x1))
    assert np.array_equal(A @ X2, vec(u1=2, v1=1, u2=2 * x2))
    assert np.array_equal(B @ X1, vec(u1=1, v1=-2, v2=-2 * x1))
    assert np.array_equal(B @ X2, vec(u3=-1, v3=2, v4=2 * x2))


@pytest.mark.parametrize("J", [J1, J2, composed(J1, J2, "J3"), standard_complex(8)])
def test_presets_almost_hermitian(J):
    rep = verify_almost_hermitian(J, g8, ambient_pts)
    assert rep.passed and rep.residual == 0.0


def test_presets_anticommute():
    assert verify_anticommute(J1, J2, ambient_pts).passed
    J3 = composed(J1, J2)
    assert verify_anticommute(J1, J3, ambient_pts).passed
    assert verify_anticommute(J2, J3, ambient_pts).passed


def test_standard_commutes_with_itself_not_anticommute():
    J = standard_complex(8)
    assert not verify_anticommute(J, J, ambient_pts).passed


def test_non_hermitian_detected():
    M = np.zeros((2, 2))
    M[0, 1], M[1, 0] = -2.0, 0.5  # J² = −I but not skew for the identity metric
    rep = verify_almost_hermitian(TensorField11.constant(M), MetricSpec(2), [np.zeros(2)])
    assert not rep.passed
    assert rep.detail["square_residual"] == 0.0
    assert rep.detail["skew_residual"] > 1


def test_dimension_errors():
    with pytest.raises(DimensionError):
        standard_complex(3)
    with pytest.raises(DimensionError):
        verify_anticommute(standard_complex(4), J1, [np.zeros(8)])


# -- families ------------------------------------------------------------------------------


@settings(max_examples=50, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2))
def test_family_almost_complex_iff_normalized(a, b):
    total = a * a + b * b
    M = a * J1.at(np.zeros(8)) + b * J2.at(np.zeros(8))
    # J_ab² = −(a² + b²) I for anti-commuting J1, J2
    assert np.allclose(M @ M, -total * np.eye(8), atol=1e-12)
    c = CoefficientFunctions([a, b])
    if abs(total - 1.0) > 1e-12:
        with pytest.raises(NormalizationError):
            build_family(J1, J2, c)
    else:
        Jab = build_family(J1, J2, c)
        assert verify_almost_hermitian(Jab, g8, ambient_pts).passed


def test_family_rejects_bad_coefficients_and_commuting_pairs():
    with pytest.raises(NormalizationError) as exc:
        build_family(J1, J2, CoefficientFunctions([0.8, 0.7]))
    assert exc.value.total == pytest.approx(1.13)
    J = standard_complex(8)
    with pytest.raises(AnticommutationError):
        build_family(J, J, CoefficientFunctions([0.6, 0.8]))


def test_family_lazy_normalization_check():
    c = CoefficientFunctions([lambda x: math.cos(x[0]), lambda x: 1.0])
    Jab = build_family(J1, J2, CoefficientFunctions([lambda x: nk.cos(x[0]), lambda x: nk.sin(x[0])]))
    assert verify_almost_hermitian(Jab, g8, ambient_pts).passed
    bad = build_family(J1, J2, c, points=[np.full(8, math.pi / 2)])
    with pytest.raises(NormalizationError):
        bad.at(np.zeros(8))


def test_family_k_quaternionic():
    J3 = composed(J1, J2)
    s = 1 / math.sqrt(3)
    Jf = build_family_k([J1, J2, J3], CoefficientFunctions([s, s, s]))
    assert verify_almost_hermitian(Jf, g8, ambient_pts).passed


def test_block_sum_and_conjugation_preserve_structure():
    Q = plane_rotation(8, 0, 1, lambda x: x[0])
    K1, K2 = conjugated(J1, Q), conjugated(J2, Q)
    assert verify_almost_hermitian(K1, g8, ambient_pts).passed
    assert verify_anticommute(K1, K2, ambient_pts).passed
    B = block_sum([standard_complex(2), J1])
    assert B.dim == 10
    assert verify_almost_hermitian(B, MetricSpec(10), [rng.uniform(-1, 1, 10)]).passed


# -- Nijenhuis, bracket, nabla ------------------------------------------------------------------


def field_X(x):
    return [1.0, x[1], 0.0, x[0] * x[2], 0.0, 0.0, x[7], 0.0]


def field_Y(x):
    return [x[3], 0.0, 1.0, 0.0, x[1] ** 2, 0.0, 0.0, 1.0]


def field_Z(x):
    return [nk.sin(x[4]), 1.0, x[0], 0.0, 0.0, x[2] * x[5], 0.0, x[6]]


Q = plane_rotation(8, 0, 1, lambda x: x[0] + 0.5 * x[2])
K1, K2 = conjugated(J1, Q, "K1"), conjugated(J2, Q, "K2")


@pytest.mark.parametrize("X,Y", [(field_X, field_Y), (field_Y, field_Z), (field_X, field_Z)])
def test_nijenhuis_and_bracket_against_fd(X, Y):
    for x in ambient_pts[:3]:
        assert np.allclose(nijenhuis(K1, X, Y, x), fd_nijenhuis(K1, X, Y, x), atol=1e-7)
        assert np.allclose(fn_bracket(K1, K2, X, Y, x), fd_fn_bracket(K1, K2, X, Y, x), atol=1e-7)


def test_self_bracket_is_twice_nijenhuis():
    for x in ambient_pts[:3]:
        assert np.allclose(fn_bracket(K1, K1, field_X, field_Z, x), 2 * nijenhuis(K1, field_X, field_Z, x), atol=1e-12)


def test_six_term_form_for_anticommuting_pair():
    for x in ambient_pts[:3]:
        full = fn_bracket(K1, K2, field_X, field_Y, x)
        short = fn_bracket(K1, K2, field_X, field_Y, x, simplified=True)
        assert np.allclose(full, short, atol=1e-12)


def test_nijenhuis_antisymmetric_and_constant_vanishes():
    x = ambient_pts[0]
    assert np.allclose(nijenhuis(K1, field_X, field_Y, x), -nijenhuis(K1, field_Y, field_X, x), atol=1e-12)
    assert np.abs(nijenhuis(J1, field_X, field_Y, x)).max() < 1e-13
    assert np.abs(nijenhuis(K1, field_X, field_Y, x)).max() > 1e-2


@pytest.mark.parametrize("a,b", [(0.6, 0.8), (1 / math.sqrt(2), -1 / math.sqrt(2)), (1.0, 0.0)])
def test_decomposition_identity(a, b):
    assert decomposition_check(K1, K2, a, b, field_X, field_Z, ambient_pts[:4]) < 1e-12


def test_nabla_flat_constant_vanishes_and_leibniz():
    x = ambient_pts[1]
    assert np.abs(nabla_J(J1, field_X, field_Y, x)).max() == 0.0
    # rotating coefficients: (∇_X J)Y = X(a) J1 Y + X(b) J2 Y
    Jab = build_family(J1, J2, CoefficientFunctions([lambda p: nk.cos(p[0]), lambda p: nk.sin(p[0])]))
    got = nabla_J(Jab, field_X, field_Y, x)
    X0 = field_X(x)[0]
    want = X0 * (-math.sin(x[0]) * J1.at(x) + math.cos(x[0]) * J2.at(x)) @ np.array(field_Y(x))
    assert np.allclose(got, want, atol=1e-13)
