import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from lsnystrom.geometry import (
    BoundaryPatch,
    GeometryDomainError,
    ProblemConfig,
    RefractiveProfile,
    StarCurve,
    bean_curve,
    build_bean_patchset,
    build_disc_patchset,
    build_grid,
    disc_curve,
    pou_weight,
)
from lsnystrom.quadrature import ConfigurationError


def _sample_inside(curve, n, seed):
    rng = np.random.default_rng(seed)
    th = rng.uniform(0, 2 * np.pi, n)
    s = np.sqrt(rng.uniform(0, 1, n))
    r = s * curve.radius(th)
    return np.column_stack([r * np.cos(th), r * np.sin(th)])


@pytest.fixture(scope="module")
def disc_set():
    return build_disc_patchset(1.0, (32, 16, 32))


@pytest.fixture(scope="module")
def bean_set():
    return build_bean_patchset(resolutions=(32, 16, 32))


def test_disc_boundary_image_on_circle(disc_set):
    t1 = np.linspace(0, 1, 57)
    for p in disc_set.patches[:2]:
        x = p.map(t1, np.zeros_like(t1))
        assert np.max(np.abs(np.hypot(x[:, 0], x[:, 1]) - 1.0)) < 1e-14


def test_bean_boundary_image_on_curve(bean_set):
    curve = bean_set.curve
    t1 = np.linspace(0, 1, 57)
    for p in bean_set.patches[:2]:
        x = p.map(t1, np.zeros_like(t1))
        th = p.theta(t1)
        assert np.max(np.abs(x - curve.point(th))) < 1e-14


def test_bean_is_concave_somewhere():
    c = bean_curve()
    th = np.linspace(0, 2 * np.pi, 4001, endpoint=False)
    x = c.point(th)
    dx = np.gradient(x, th, axis=0)
    ddx = np.gradient(dx, th, axis=0)
    curvature_sign = np.sign(dx[:, 0] * ddx[:, 1] - dx[:, 1] * ddx[:, 0])
    assert np.any(curvature_sign < 0) and np.any(curvature_sign > 0)


@pytest.mark.parametrize("which", ["disc", "bean"])
def test_pou_sums_to_one(which, disc_set, bean_set):
    ps = disc_set if which == "disc" else bean_set
    x = _sample_inside(ps.curve, 100, seed=1)
    w = ps.weights(x)
    assert np.max(np.abs(w.sum(axis=0) - 1.0)) < 1e-12
    assert np.all(w >= 0)


@settings(max_examples=200, deadline=None)
@given(th=st.floats(0, 2 * np.pi), s=st.floats(0, 1))
def test_pou_sum_property(th, s):
    ps = build_bean_patchset(resolutions=(16, 8, 16))
    r = s * ps.curve.radius(th)
    x = np.array([r * math.cos(th), r * math.sin(th)])
    assert abs(sum(pou_weight(ps, k, x) for k in range(len(ps.patches))) - 1.0) < 1e-12


def test_single_cover_weight_is_one(disc_set):
    # (1, 0) sits on the boundary where only the sector centred at angle 0 reaches
    assert pou_weight(disc_set, 0, np.array([1.0, 0.0])) == pytest.approx(1.0, abs=1e-15)
    assert pou_weight(disc_set, 2, np.array([0.0, 0.0])) == pytest.approx(1.0, abs=1e-15)


def test_point_outside_raises(disc_set):
    with pytest.raises(GeometryDomainError):
        disc_set.weights(np.array([[3.0, 0.0]]))


@settings(max_examples=100, deadline=None)
@given(t1=st.floats(0.01, 0.99), t2=st.floats(0.0, 1.0))
def test_boundary_inverse_roundtrip(t1, t2):
    p = build_bean_patchset(resolutions=(16, 8, 16)).patches[1]
    a, b = p.inverse(p.map(t1, t2))
    assert abs(a - t1) < 1e-12 and abs(b - t2) < 1e-12


def test_boundary_jacobian_matches_finite_differences():
    p = build_bean_patchset(resolutions=(16, 8, 16)).patches[0]
    t1, t2, h = 0.37, 0.21, 1e-6
    d1 = (p.map(t1 + h, t2) - p.map(t1 - h, t2)) / (2 * h)
    d2 = (p.map(t1, t2 + h) - p.map(t1, t2 - h)) / (2 * h)
    det = abs(d1[0] * d2[1] - d1[1] * d2[0])
    assert p.jacobian(t1, t2) == pytest.approx(det, rel=1e-8)


@pytest.mark.parametrize(
    "res, Q, expected",
    [((8, 2, 8), 3, 135), ((8, 4, 8), 5, 171), ((32, 16, 32), 5, 2211), ((128, 64, 128), 5, 33411)],
)
def test_unknown_counts(res, Q, expected):
    g = build_grid(build_disc_patchset(1.0, res), ProblemConfig(1.0), Q)
    assert g.size == expected


def test_grid_label():
    g = build_grid(build_disc_patchset(1.0, (128, 64, 128)), ProblemConfig(1.0), 5)
    assert g.label() == "2x65x129+1x129x129"


def test_disc_area_converges():
    errs = []
    for lvl in (2, 3, 4):
        g = build_grid(build_disc_patchset(1.0, (8 * 2**lvl, 4 * 2**lvl, 8 * 2**lvl)), ProblemConfig(1.0), 5)
        errs.append(abs(g.weights.sum() - math.pi))
    assert errs[0] > errs[1] > errs[2]
    # at least the Newton-Cotes order in t2
    assert math.log2(errs[1] / errs[2]) >= 5


def test_bean_area_matches_contour_integral():
    c = bean_curve()
    exact = integrate.quad(lambda t: 0.5 * c.radius(t) ** 2, 0, 2 * np.pi, limit=200, epsabs=1e-13)[0]
    errs = []
    for lvl in (2, 3, 4):
        ps = build_bean_patchset(resolutions=(8 * 2**lvl, 4 * 2**lvl, 8 * 2**lvl))
        g = build_grid(ps, ProblemConfig(1.0, c, "bean"), 5)
        errs.append(abs(g.weights.sum() - exact) / exact)
    assert errs[0] > errs[1] > errs[2]
    assert math.log2(errs[1] / errs[2]) >= 5


def test_bad_paneling_rejected():
    with pytest.raises(ConfigurationError):
        build_grid(build_disc_patchset(1.0, (8, 6, 8)), ProblemConfig(1.0), 5)


def test_config_validation():
    with pytest.raises(ConfigurationError):
        ProblemConfig(-1.0)
    with pytest.raises(ConfigurationError):
        ProblemConfig(1.0, direction=(1.0, 1.0))
    with pytest.raises(ConfigurationError):
        RefractiveProfile("nonsense")
    with pytest.raises(ConfigurationError):
        StarCurve(scale=1.0, cos_coeffs=(0.0, 1.5))
    with pytest.raises(ConfigurationError):
        build_disc_patchset(1.0, (8, 1, 8))


def test_profiles():
    x = np.array([[0.25, 0.0], [0.5, 0.5]])
    trig = RefractiveProfile("separable_trig")
    assert trig.index(x) == pytest.approx(np.sin(np.pi * x[:, 0]) * np.cos(np.pi * x[:, 1]))
    assert RefractiveProfile("constant", 2.0).contrast(x) == pytest.approx([-3.0, -3.0])
    g = np.linspace(-1, 1, 9)
    tab = RefractiveProfile("user_table", table=(g, g, np.add.outer(g, 2 * g) + 1.5))
    assert tab.index(x) == pytest.approx(x[:, 0] + 2 * x[:, 1] + 1.5, abs=1e-12)


def test_grid_weights_vanish_outside_pou_support(disc_set):
    g = build_grid(disc_set, ProblemConfig(1.0), 5)
    assert np.all(g.weights >= -1e-15)
    assert isinstance(disc_set.patches[0], BoundaryPatch)
    assert np.all(np.isfinite(g.contrast))
