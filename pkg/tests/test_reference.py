import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import special

from lsnystrom.reference import convergence_orders, mie_coefficients, mie_total_field, relative_errors

K, A, N = 5.0, 1.0, math.sqrt(2)


@pytest.fixture(scope="module")
def sol():
    return mie_coefficients(K, A, N)


def test_unit_index_is_transparent():
    s = mie_coefficients(K, A, 1.0)
    assert np.max(np.abs(s.scattered)) <= 1e-14
    pts = np.array([[0.2, 0.1], [1.5, -0.7], [-3.0, 2.0]])
    assert np.allclose(mie_total_field(s, pts), np.exp(1j * K * pts[:, 0]), atol=1e-12)


def test_order_zero_against_mpmath(sol):
    mpmath.mp.dps = 30
    ka, nka = K * A, N * K * A
    M = mpmath.matrix(
        [
            [mpmath.besselj(0, nka), -mpmath.hankel1(0, ka)],
            [N * mpmath.diff(lambda t: mpmath.besselj(0, t), nka), -mpmath.diff(lambda t: mpmath.hankel1(0, t), ka)],
        ]
    )
    rhs = mpmath.matrix([mpmath.besselj(0, ka), mpmath.diff(lambda t: mpmath.besselj(0, t), ka)])
    a, b = mpmath.lu_solve(M, rhs)
    i0 = int(np.nonzero(sol.orders == 0)[0][0])
    assert abs(sol.interior[i0] - complex(a)) <= 1e-12
    assert abs(sol.scattered[i0] - complex(b)) <= 1e-12


def _radial_parts(s, theta):
    """Field and radial derivative at r = a from the inside and outside series."""
    al = np.abs(s.orders)
    e = np.exp(1j * np.outer(theta, s.orders))
    ka, nka = s.kappa * s.radius, s.index * s.kappa * s.radius
    u_in = e @ (s.interior * special.jv(al, nka))
    du_in = e @ (s.interior * s.index * s.kappa * special.jvp(al, nka))
    inc = np.exp(1j * ka * np.cos(theta))
    dinc = 1j * s.kappa * np.cos(theta) * inc
    u_out = inc + e @ (s.scattered * special.hankel1(al, ka))
    du_out = dinc + e @ (s.scattered * s.kappa * special.h1vp(al, ka))
    return u_in, du_in, u_out, du_out


def test_interface_continuity(sol):
    th = np.linspace(0, 2 * np.pi, 64, endpoint=False)
    u_in, du_in, u_out, du_out = _radial_parts(sol, th)
    assert np.max(np.abs(u_in - u_out)) <= 1e-10
    assert np.max(np.abs(du_in - du_out)) <= 1e-10 * K
    # the evaluator picks the right series on each side
    eps = 1e-9
    p_in = np.column_stack([(A - eps) * np.cos(th), (A - eps) * np.sin(th)])
    p_out = np.column_stack([(A + eps) * np.cos(th), (A + eps) * np.sin(th)])
    assert np.max(np.abs(mie_total_field(sol, p_in) - mie_total_field(sol, p_out))) <= 1e-7


@pytest.mark.parametrize("x, kk", [((0.3, -0.2), K * N), ((-0.1, 0.55), K * N), ((1.6, 0.4), K), ((-2.0, -1.0), K)])
def test_helmholtz_residual(sol, x, kk):
    h = 1e-4
    x = np.asarray(x)
    st5 = np.array([x, x + [h, 0], x - [h, 0], x + [0, h], x - [0, h]])
    u = mie_total_field(sol, st5)
    lap = (u[1:].sum() - 4 * u[0]) / h**2
    assert abs(lap + kk**2 * u[0]) <= 1e-5 * max(1.0, abs(u[0])) * kk**2


def test_scattered_field_decay(sol):
    r = np.array([64.0, 256.0])
    p = np.column_stack([r, np.zeros(2)])
    us = mie_total_field(sol, p) - np.exp(1j * K * r)
    slope = math.log(abs(us[1]) / abs(us[0])) / math.log(r[1] / r[0])
    assert slope == pytest.approx(-0.5, abs=0.02)


@given(x=st.floats(-3, 3), y=st.floats(0.01, 3))
def test_mirror_symmetry(sol, x, y):
    u = mie_total_field(sol, np.array([[x, y], [x, -y]]))
    assert abs(u[0] - u[1]) <= 1e-12 * max(1.0, abs(u[0]))


def test_invalid_parameters():
    for args in [(0.0, 1.0, 1.0), (1.0, -1.0, 1.0), (1.0, 1.0, 0.0)]:
        with pytest.raises(ValueError):
            mie_coefficients(*args)


def test_relative_errors():
    e = np.array([1.0, -2.0, 0.5j])
    assert relative_errors(e, e) == (0.0, 0.0)
    einf, e2 = relative_errors(e + np.array([0.2, 0, 0]), e)
    assert einf == pytest.approx(0.1)
    assert e2 == pytest.approx(0.2 / math.sqrt(1 + 4 + 0.25))
    with pytest.raises(ValueError):
        relative_errors(np.zeros(3), np.zeros(3))
    with pytest.raises(ValueError):
        relative_errors(np.zeros(2), np.ones(3))


def test_convergence_orders():
    o = convergence_orders([1.0, 1 / 32, 1 / 1024])
    assert math.isnan(o[0])
    assert o[1:] == pytest.approx([5.0, 5.0])
