import math

import numpy as np
import pytest
from scipy.special import hankel1, jv

from lsnystrom.cli import RunConfig, make_grid
from lsnystrom.operator import (
    Evaluator,
    OperatorOptions,
    apply_K,
    apply_LS,
    build_workspace,
    direct_sum,
    incident_field,
)
from lsnystrom.reference import mie_coefficients, mie_total_field, relative_errors

KAPPA = 5.0


def constant_potential(x, kappa=KAPPA, a=1.0):
    """``w = int_disc G(x, y) dy``: solves ``(Lap + k^2) w = -1`` inside, radiating outside."""
    ka = kappa * a
    den = kappa**2 * (jv(0, ka) * hankel1(1, ka) - jv(1, ka) * hankel1(0, ka))
    A = hankel1(1, ka) / den
    B = jv(1, ka) / den
    r = np.hypot(x[:, 0], x[:, 1])
    return np.where(r <= a, -1 / kappa**2 + A * jv(0, kappa * r), B * hankel1(0, kappa * r))


@pytest.fixture(scope="module")
def ws2():
    return build_workspace(make_grid(RunConfig(), 2))


def test_zero_contrast_gives_zero():
    ws = build_workspace(make_grid(RunConfig(index=1.0), 1))
    u = np.random.default_rng(0).normal(size=ws.size) + 0j
    assert np.all(apply_K(ws, u) == 0)
    assert np.array_equal(apply_LS(ws, u), u)


def test_linearity(ws2):
    rng = np.random.default_rng(1)
    u, v = (rng.normal(size=(2, ws2.size)) + 1j * rng.normal(size=(2, ws2.size)))
    a, b = 0.3 - 1.2j, 2.1 + 0.4j
    lhs = apply_K(ws2, a * u + b * v)
    rhs = a * apply_K(ws2, u) + b * apply_K(ws2, v)
    assert np.linalg.norm(lhs - rhs) <= 1e-12 * np.linalg.norm(rhs)


def test_accelerated_matches_direct(ws2):
    u = incident_field(ws2.grid, KAPPA)
    fast = apply_K(ws2, u)
    slow = apply_K(ws2, u, direct=True)
    assert np.linalg.norm(fast - slow) / np.linalg.norm(slow) <= 1e-8


def test_constant_density_converges_to_closed_form():
    errs = []
    for lvl in (1, 2, 3):
        g = make_grid(RunConfig(), lvl)
        ws = build_workspace(g)
        # contrast is 1 - 2 = -1 everywhere
        errs.append(relative_errors(apply_K(ws, np.ones(g.size)), -constant_potential(g.points))[0])
    assert errs[0] > errs[1] > errs[2]
    assert math.log2(errs[1] / errs[2]) >= 4


def test_mie_field_nearly_solves_discrete_equation():
    res = []
    for lvl in (1, 2):
        g = make_grid(RunConfig(), lvl)
        ws = build_workspace(g)
        u = mie_total_field(mie_coefficients(KAPPA, 1.0, math.sqrt(2)), g.points)
        r = apply_LS(ws, u) - incident_field(g, KAPPA)
        res.append(np.max(np.abs(r)) / np.max(np.abs(u)))
    assert res[1] < 1e-3
    assert math.log2(res[0] / res[1]) >= 4


def test_off_grid_targets_match_closed_form(ws2):
    g = ws2.grid
    th = np.linspace(0, 2 * np.pi, 9, endpoint=False)
    pts = np.concatenate([np.column_stack([r * np.cos(th), r * np.sin(th)]) for r in (0.3, 1.5, 3.0)])
    ev = Evaluator(g, pts, OperatorOptions())
    got = ev.apply(np.ones(g.size, dtype=complex))
    ref = constant_potential(pts)
    assert np.max(np.abs(got - ref)) / np.max(np.abs(ref)) <= 1e-3


def test_direct_sum_against_explicit_loop():
    rng = np.random.default_rng(3)
    src, tgt = rng.uniform(size=(30, 2)), rng.uniform(size=(12, 2)) + 2
    q = rng.normal(size=30) + 1j * rng.normal(size=30)
    ref = [sum(0.25j * hankel1(0, 2.0 * np.hypot(*(t - s))) * qq for s, qq in zip(src, q)) for t in tgt]
    assert np.allclose(direct_sum(2.0, src, tgt, q), ref, rtol=1e-12, atol=0)


def test_incident_field():
    x = np.array([[0.0, 0.0], [0.3, -1.1], [2.0, 5.0]])
    d = (1 / math.sqrt(2), 1 / math.sqrt(2))
    u = incident_field(x, 3.0, d)
    assert u[0] == 1
    assert np.allclose(np.abs(u), 1, atol=1e-15)
    assert u[1] == pytest.approx(np.exp(1j * 3.0 * (0.3 - 1.1) / math.sqrt(2)), abs=1e-15)
    with pytest.raises(ValueError):
        incident_field(x, 3.0, (1.0, 1.0))


def test_density_shape_checked(ws2):
    with pytest.raises(ValueError):
        apply_K(ws2, np.ones(ws2.size + 1))
