import math

import numpy as np
import pytest
from scipy.special import hankel1

from lsnystrom.acceleration import (
    Accelerator,
    AcceleratorError,
    CellDecomposition,
    EquivalentSourceFit,
    InteriorExpansion,
    SampleLattice,
    _adjacent_matrix,
    _is_resonant,
    build_cells,
    direct_nonadjacent,
    fit_equivalent_sources,
    global_convolution,
    neq_for,
    plane_wave_interior,
    subtract_adjacent,
)


def G(kappa, x, y):
    """Reference kernel from scipy (independent of the package's Bessel code)."""
    d = np.hypot(*(np.asarray(x)[..., None, :] - np.asarray(y)[None, ...]).transpose(2, 0, 1))
    with np.errstate(all="ignore"):
        out = 0.25j * hankel1(0, kappa * d)
    return np.where(d > 0, out, 0)


def test_unit_square_cells():
    c = build_cells((0, 0), (1, 1), 1.0, 4)
    assert c.L == 4
    assert c.H == pytest.approx(c.A / 4)
    assert c.A == pytest.approx(1.0, rel=1e-8)


def test_resonant_size_is_adjusted():
    kappa = math.pi * math.sqrt(2)  # kappa H = pi sqrt 2 for H = 1
    assert _is_resonant(kappa, 1.0)
    c = build_cells((0, 0), (4, 4), kappa, 4)
    assert not _is_resonant(kappa, c.H)
    assert c.A > 4.0


def test_too_few_cells():
    with pytest.raises(AcceleratorError):
        build_cells((0, 0), (1, 1), 1.0, 2)


def test_cell_indexing_and_clipped_stencil():
    c = CellDecomposition((0.0, 0.0), 1.0, 4)
    pts = np.random.default_rng(0).uniform(0, 1, size=(500, 2))
    i, j = c.cell_index(pts)
    assert np.all((0 <= i) & (i < 4) & (0 <= j) & (j < 4))
    assert np.all(pts[:, 0] >= i * c.H) and np.all(pts[:, 0] <= (i + 1) * c.H)
    assert len(c.neighbours(0, 0)) == 4
    assert len(c.neighbours(0, 2)) == 6
    assert len(c.neighbours(1, 2)) == 9


def test_neq_formula():
    assert neq_for(8 * math.pi, 0.25, 1e-8) >= math.ceil(2 * math.pi) + 2
    assert neq_for(1.0, 0.1, 1e-8) == math.ceil(math.log(1e8) / (2 * math.log(3 / math.sqrt(2))))


def test_zero_strengths_give_zero_equivalents():
    fit = EquivalentSourceFit(3.0, 0.5, 8)
    src = np.array([[0.2, 0.3], [0.1, 0.4]])
    assert np.all(fit_equivalent_sources(fit, src, np.zeros(2)) == 0)


def test_monopole_reproduced_at_nonadjacent_points():
    kappa, H = 5.0, 0.4
    neq = neq_for(kappa, H, 1e-8)
    fit = EquivalentSourceFit(kappa, H, neq)
    centre = np.array([[H / 2, H / 2]])
    eq = fit_equivalent_sources(fit, centre, np.array([1.0]))
    rng = np.random.default_rng(3)
    # 200 points outside the 3x3 neighbourhood, up to a few cells away
    pts = []
    while len(pts) < 200:
        p = rng.uniform(-4 * H, 5 * H, 2)
        if not (-H <= p[0] <= 2 * H and -H <= p[1] <= 2 * H):
            pts.append(p)
    pts = np.array(pts)
    approx = fit.field(eq, pts)
    exact = G(kappa, pts, centre)[:, 0]
    assert np.max(np.abs(approx - exact)) / np.max(np.abs(exact)) <= 1e-6


def _lattice(kappa=4.0, L=8, neq=6):
    cells = CellDecomposition((0.0, 0.0), 1.0, L)
    return cells, SampleLattice(cells, kappa, neq, n_v=8, s=1)


def _lattice_nodes(lat):
    a = np.arange(lat.shape[0]) * lat.dx
    b = (np.arange(lat.shape[1]) + 0.5) * lat.dy
    A, B = np.meshgrid(a, b, indexing="ij")
    return np.stack([A.ravel(), B.ravel()], -1)


def _source_positions(lat):
    """Positions of every equivalent unknown, ordered like the strength array."""
    L, neq = lat.cells.L, lat.neq
    pos = np.zeros((L * L, 4, neq, 2))
    for i in range(L):
        for j in range(L):
            y = (lat.source_rows(j) + 0.5) * lat.dy
            for face in (0, 1):
                x = (i + face) * lat.cells.H
                pos[i * L + j, face, :, 0] = x
                pos[i * L + j, 2 + face, :, 0] = x
                pos[i * L + j, face, :, 1] = y
                pos[i * L + j, 2 + face, :, 1] = y
    return pos


def _direct_field(kappa, lat, strengths, targets):
    pos = _source_positions(lat).reshape(-1, 4, lat.neq, 2)
    out = np.zeros(targets.shape[0], dtype=complex)
    for kind in range(4):
        P = pos[:, kind].reshape(-1, 2)
        q = strengths[:, kind * lat.neq : (kind + 1) * lat.neq].reshape(-1)
        d = targets[:, None, :] - P[None, :, :]
        r = np.hypot(d[..., 0], d[..., 1])
        with np.errstate(all="ignore"):
            if kind < 2:
                k = 0.25j * hankel1(0, kappa * r)
            else:  # derivative in the source point along (1, 0)
                k = 0.25j * kappa * hankel1(1, kappa * r) * d[..., 0] / r
        out += np.where(r > 0, k, 0) @ q
    return out


def test_convolution_single_monopole():
    kappa = 4.0
    cells, lat = _lattice(kappa)
    st = np.zeros((cells.L**2, 4 * lat.neq), dtype=complex)
    st[3 * cells.L + 5, 2] = 1.0  # left-face monopole number 2 of cell (3, 5)
    vals = global_convolution(lat, st).ravel()
    nodes = _lattice_nodes(lat)
    src = _source_positions(lat)[3 * cells.L + 5, 0, 2]
    d = np.hypot(*(nodes - src).T)
    mask = d > 1e-12
    ref = 0.25j * hankel1(0, kappa * d[mask])
    assert np.max(np.abs(vals[mask] - ref)) <= 1e-12 * max(1.0, np.max(np.abs(ref)))
    assert vals[~mask] == pytest.approx(0.0, abs=1e-12)


def test_convolution_zero_and_random():
    kappa = 4.0
    cells, lat = _lattice(kappa)
    zero = np.zeros((cells.L**2, 4 * lat.neq), dtype=complex)
    assert np.all(global_convolution(lat, zero) == 0)
    rng = np.random.default_rng(7)
    st = rng.normal(size=zero.shape) + 1j * rng.normal(size=zero.shape)
    nodes = _lattice_nodes(lat)[::37]
    idx = np.arange(_lattice_nodes(lat).shape[0])[::37]
    vals = global_convolution(lat, st).ravel()[idx]
    ref = _direct_field(kappa, lat, st, nodes)
    assert np.linalg.norm(vals - ref) / np.linalg.norm(ref) <= 1e-10


def test_convolution_shape_check():
    cells, lat = _lattice()
    with pytest.raises(AcceleratorError):
        global_convolution(lat, np.zeros((3, 3)))


def _subtracted(kappa, cells, lat, st, which):
    fit = EquivalentSourceFit(kappa, cells.H, lat.neq)
    adj = _adjacent_matrix(lat, fit)
    vals = global_convolution(lat, st)
    return vals, subtract_adjacent(lat, adj, st, vals, np.array([which]))[0]


def test_subtraction_far_cell_unchanged():
    kappa = 4.0
    cells, lat = _lattice(kappa)
    st = np.zeros((cells.L**2, 4 * lat.neq), dtype=complex)
    st[7 * cells.L + 7] = 1.0
    target = 1 * cells.L + 1
    vals, sub = _subtracted(kappa, cells, lat, st, target)
    from lsnystrom.acceleration import _cell_samples

    raw = _cell_samples(lat, vals, np.array([target]))[0]
    assert np.array_equal(sub, raw)


def test_subtraction_own_cell_cancels():
    kappa = 4.0
    cells, lat = _lattice(kappa)
    st = np.zeros((cells.L**2, 4 * lat.neq), dtype=complex)
    target = 3 * cells.L + 4
    st[target] = np.random.default_rng(1).normal(size=4 * lat.neq)
    vals, sub = _subtracted(kappa, cells, lat, st, target)
    assert np.max(np.abs(sub)) <= 1e-12 * np.max(np.abs(vals))


def test_subtraction_random_matches_nonadjacent_direct_sum():
    kappa = 4.0
    cells, lat = _lattice(kappa)
    rng = np.random.default_rng(5)
    st = rng.normal(size=(cells.L**2, 4 * lat.neq)) + 1j * rng.normal(size=(cells.L**2, 4 * lat.neq))
    target = 2 * cells.L + 6
    _, sub = _subtracted(kappa, cells, lat, st, target)
    ti, tj = divmod(target, cells.L)
    far = st.copy()
    for i in range(cells.L):
        for j in range(cells.L):
            if abs(i - ti) <= 1 and abs(j - tj) <= 1:
                far[i * cells.L + j] = 0
    pts = lat.cell_sample_points() + cells.cell_origin(target)
    ref = _direct_field(kappa, lat, far, pts)
    assert np.max(np.abs(sub - ref)) / np.max(np.abs(ref)) <= 1e-10


def test_expansion_reproduces_exterior_monopole():
    kappa, H = 6.0, 0.5
    cells, lat = CellDecomposition((0, 0), 4 * H, 4), None
    lat = SampleLattice(cells, kappa, 8, n_v=12, s=3)
    samples_pts = lat.cell_sample_points()
    src = np.array([[H / 2 + 2 * H, H / 3]])  # two cells to the right
    data = G(kappa, samples_pts, src)[:, 0]
    ev = plane_wave_interior(kappa, H, samples_pts, data, basis="bessel")
    inner = np.random.default_rng(2).uniform(0.05 * H, 0.95 * H, size=(50, 2))
    exact = G(kappa, inner, src)[:, 0]
    assert np.max(np.abs(ev(inner) - exact)) / np.max(np.abs(exact)) <= 1e-7


def test_expansion_zero_data_and_exact_plane_wave():
    kappa, H = 5.0, 0.5
    pts = SampleLattice(CellDecomposition((0, 0), 4 * H, 4), kappa, 8, n_v=12, s=3).cell_sample_points()
    # a small wave set keeps the fit well conditioned, so reproduction is exact
    exp = InteriorExpansion(kappa, H, pts, basis="plane", n_waves=12)
    assert np.all(exp.coefficients(np.zeros((1, pts.shape[0]))) == 0)
    ang = 2 * np.pi * 5 / 12
    d = np.array([math.cos(ang), math.sin(ang)])
    wave = lambda x: np.exp(1j * kappa * ((x - 0.5 * H) @ d))  # noqa: E731
    c = exp.coefficients(wave(pts)[None, :])[0]
    inner = np.random.default_rng(4).uniform(0, H, size=(40, 2))
    assert np.max(np.abs(exp.evaluate(c, inner) - wave(inner))) <= 1e-12


def test_expansion_basis_validation():
    with pytest.raises(AcceleratorError):
        InteriorExpansion(1.0, 1.0, np.zeros((4, 2)), basis="wavelet")


def test_accelerator_against_direct_nonadjacent():
    rng = np.random.default_rng(11)
    kappa = 6.0
    src = rng.uniform(-1, 1, size=(1500, 2))
    tgt = rng.uniform(-1, 1, size=(700, 2))
    q = rng.normal(size=1500) + 1j * rng.normal(size=1500)
    cells = build_cells(np.minimum(src.min(0), tgt.min(0)), np.maximum(src.max(0), tgt.max(0)), kappa, 6)
    acc = Accelerator(kappa, src, tgt, cells, neq_for(kappa, cells.H, 1e-10))
    a = acc.apply(q)
    d = direct_nonadjacent(kappa, cells, src, tgt, q)
    assert np.linalg.norm(a - d) / np.linalg.norm(d) <= 1e-8
    assert acc.stats["L"] == 6
