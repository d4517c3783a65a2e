"""Discrete volume operator and Lippmann-Schwinger map.

For a density ``u`` on the Nystrom grid let ``phi = m u`` and ``q = w phi``.
At a target ``x``::

    K[u](x) = sum_{k covering x} (Sing_k(x) - Corr_k(x)) + sum_{y != x} G(x, y) q_y

``Sing_k`` integrates ``eta G psi_k`` with a singular rule and ``Corr_k``
removes the same ``eta``-weighted piece from the plain lattice sum.  The
last term splits into the ``3 x 3`` cell neighbourhood (direct, sparse) and
the rest (accelerated or direct).

Singular values are computed once per apply on patch lattices and
interpolated to the targets, so grid points and arbitrary evaluation points
are handled the same way.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numba as nb
import numpy as np
from scipy import sparse

from ._maps import cutoff, lagrange_weights, lagrange_weights_clamped
from .acceleration import Accelerator, build_cells, neq_for
from .geometry import NystromGrid
from .kernel import green_r
from .quadrature import (
    BoundaryRule,
    ConfigurationError,
    CovParams,
    CutoffParams,
    InterpParams,
    boundary_singular_rows,
    default_polar_counts,
    interior_singular_lattice,
    interior_stencil,
    refine_boundary_density,
)

logger = logging.getLogger(__name__)

__all__ = [
    "OperatorOptions",
    "Evaluator",
    "Workspace",
    "build_workspace",
    "incident_field",
    "apply_K",
    "apply_LS",
    "direct_sum",
]


@dataclass(frozen=True)
class OperatorOptions:
    """Discretisation and acceleration parameters.

    Parameters
    ----------
    r_interior : float
        Largest cutoff radius on interior patches (parameter units).
    r1, r2 : float
        Largest cutoff half-widths on boundary patches along ``t1`` and ``t2``.
    s0 : float
        Relative plateau of all cutoffs.
    cov : CovParams
        Graded radial variable of the singular rules.
    refinement : int
        FFT refinement of interior densities.
    boundary_refinement : int
        FFT refinement of boundary densities along ``t1``.
    degree : int, optional
        Lagrange degree; default ``Q + 1``.
    n_tau : int
        Inner nodes of the boundary rule.
    accelerate : bool
        Use the equivalent-source accelerator for non-adjacent interactions.
    cells_per_side : int, optional
        Default chooses about 24 points per cell.
    neq : int, optional
        Equivalent sources per cell face; default from ``eps``.
    eps : float
        Target accuracy for the default ``neq``.
    basis : str
        Interior expansion basis of the accelerator.
    direct_t2_lines : float
        Boundary targets off the lattice lines with ``t2`` below this many
        lattice spacings get their own singular rows instead of interpolation.
    lattice_radii : tuple or None
        Cutoff sizes ``(interior, t1, t2)`` in lattice spacings; the work per
        target then stays bounded under refinement.  ``None`` uses the
        parameter-unit values directly.
    store_correction : bool or None
        Keep the cutoff-weighted correction as a sparse matrix (fast applies)
        or recompute it on every apply (low memory).  ``None`` stores it when
        the estimated number of entries is at most ``max_stored_nnz``.
    """

    r_interior: float = 0.45
    r1: float = 0.45
    r2: float = 1.0
    s0: float = 0.05
    cov: CovParams = field(default_factory=lambda: CovParams(2))
    refinement: int = 2
    boundary_refinement: int = 1
    degree: Optional[int] = None
    n_tau: int = 128
    accelerate: bool = True
    cells_per_side: Optional[int] = None
    neq: Optional[int] = None
    eps: float = 1e-10
    basis: str = "bessel"
    direct_t2_lines: float = 8.0
    lattice_radii: Optional[tuple] = (12.0, 20.0, 32.0)
    store_correction: Optional[bool] = None
    max_stored_nnz: float = 2e8

    def radii(self, patch) -> tuple:
        """Cutoff radii ``(ra, rb)`` in parameter units for one patch.

        With ``lattice_radii = (a_interior, a1, a2)`` the radii are that many
        lattice spacings, capped by the parameter-unit values.
        """
        if patch.kind == "boundary":
            r1, r2 = self.r1, self.r2
            if self.lattice_radii is not None:
                r1 = min(r1, self.lattice_radii[1] / patch.N1)
                r2 = min(r2, self.lattice_radii[2] / patch.N2)
            return r1, r2
        r = self.r_interior
        if self.lattice_radii is not None:
            r = min(r, self.lattice_radii[0] / patch.N)
        return r, r

    def __post_init__(self) -> None:
        if not (0 < self.r_interior < 0.5 and 0 < self.r1 < 0.5):
            raise ConfigurationError("r_interior and r1 must lie in (0, 0.5)")
        if not 0 < self.r2 <= 1:
            raise ConfigurationError("r2 must lie in (0, 1]")
        if not 0 < self.s0 < 1:
            raise ConfigurationError("s0 must lie in (0, 1)")


# ---------------------------------------------------------------------------
# compiled sparse builders
# ---------------------------------------------------------------------------


@nb.njit(cache=True)
def _grow(arr, need):
    if need <= arr.shape[0]:
        return arr
    out = np.empty(max(need, 2 * arr.shape[0]), dtype=arr.dtype)
    out[: arr.shape[0]] = arr
    return out


@nb.njit(cache=True, inline="always")
def _corr_entry(x, y, a, b, i, j, kind, N1, N2, off, r1, r2, s0, px, py, w, tol):
    """Lattice index, ``eta w`` and distance of one correction term; index ``-1`` if it vanishes."""
    d1 = abs(i / N1 - a)
    d2 = abs(j / N2 - b)
    if kind == 0:
        if d1 >= r1 or d2 >= r2:
            return -1, 0.0, 0.0
        eta = cutoff(d1 / r1, s0) * cutoff(d2 / r2, s0)
        idx = off + j * (N1 + 1) + i
    else:
        rr = math.sqrt(d1 * d1 + d2 * d2)
        if rr >= r1:
            return -1, 0.0, 0.0
        eta = cutoff(rr / r1, s0)
        idx = off + i * (N2 + 1) + j
    if eta == 0.0 or w[idx] == 0.0:
        return -1, 0.0, 0.0
    dx = x - px[idx]
    dy = y - py[idx]
    dist = math.sqrt(dx * dx + dy * dy)
    if dist <= tol:
        return -1, 0.0, 0.0
    return idx, eta * w[idx], dist


@nb.njit(cache=True, inline="always")
def _window(a, b, r1, r2, N1, N2):
    return (
        max(0, int(math.ceil((a - r1) * N1))),
        min(N1, int(math.floor((a + r1) * N1))),
        max(0, int(math.ceil((b - r2) * N2))),
        min(N2, int(math.floor((b + r2) * N2))),
    )


@nb.njit(cache=True)
def _correction_count(tx, ty, tp1, tp2, kind, N1, N2, off, r1, r2, s0, px, py, w, tol, rows, counts):
    """Add the number of correction entries of each target to ``counts[rows]``."""
    for m in range(tx.shape[0]):
        i0, i1, j0, j1 = _window(tp1[m], tp2[m], r1, r2, N1, N2)
        c = 0
        for i in range(i0, i1 + 1):
            for j in range(j0, j1 + 1):
                idx, ew, dist = _corr_entry(tx[m], ty[m], tp1[m], tp2[m], i, j, kind, N1, N2, off, r1, r2, s0, px, py, w, tol)
                if idx >= 0:
                    c += 1
        counts[rows[m]] += c


@nb.njit(cache=True)
def _correction_fill(
    kappa, tx, ty, tp1, tp2, kind, N1, N2, off, r1, r2, s0, px, py, w, tol, rows, fill, indices, data
):
    """Write the correction entries of each target at ``fill[rows[m]]`` onwards.

    ``kind`` 0 is a boundary lattice (index ``j (N1+1) + i``), 1 an interior
    lattice (index ``i (N+1) + j``, circular cutoff of radius ``r1``).
    """
    for m in range(tx.shape[0]):
        i0, i1, j0, j1 = _window(tp1[m], tp2[m], r1, r2, N1, N2)
        q = fill[rows[m]]
        for i in range(i0, i1 + 1):
            for j in range(j0, j1 + 1):
                idx, ew, dist = _corr_entry(tx[m], ty[m], tp1[m], tp2[m], i, j, kind, N1, N2, off, r1, r2, s0, px, py, w, tol)
                if idx >= 0:
                    indices[q] = idx
                    data[q] = ew * green_r(kappa, dist)
                    q += 1
        fill[rows[m]] = q


@nb.njit(cache=True)
def _spmv(indptr, indices, data, x, out):
    """``out += A x`` for CSR data of any precision, accumulated in double."""
    for m in range(indptr.shape[0] - 1):
        acc = 0j
        for q in range(indptr[m], indptr[m + 1]):
            acc += data[q] * x[indices[q]]
        out[m] += acc


@dataclass
class _CompactCSR:
    """Row-compressed matrix with single-precision values."""

    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray

    @property
    def nnz(self) -> int:
        return int(self.indptr[-1])

    def matvec(self, x: np.ndarray, out: np.ndarray) -> np.ndarray:
        _spmv(self.indptr, self.indices, self.data, np.ascontiguousarray(x, dtype=complex), out)
        return out


@nb.njit(cache=True)
def _correction_apply(
    kappa, tx, ty, tp1, tp2, kind, N1, N2, off, r1, r2, s0, px, py, w, tol, phi
):
    """Matrix-free counterpart of :func:`_correction_rows` applied to ``phi``."""
    M = tx.shape[0]
    out = np.zeros(M, dtype=np.complex128)
    for m in range(M):
        i0, i1, j0, j1 = _window(tp1[m], tp2[m], r1, r2, N1, N2)
        acc = 0j
        for i in range(i0, i1 + 1):
            for j in range(j0, j1 + 1):
                idx, ew, dist = _corr_entry(tx[m], ty[m], tp1[m], tp2[m], i, j, kind, N1, N2, off, r1, r2, s0, px, py, w, tol)
                if idx >= 0:
                    acc += ew * green_r(kappa, dist) * phi[idx]
        out[m] = acc
    return out


def _window_size(kind, r_a, r_b, N1, N2) -> float:
    if kind == 0:
        return (2 * r_a * N1 + 1) * (2 * r_b * N2 + 1)
    return math.pi * (r_a * N1 + 0.5) ** 2


@nb.njit(cache=True)
def _near_rows(kappa, tx, ty, tci, tcj, L, cell_start, order, px, py, w, tol):
    """Rows of ``G(x, y) w_y`` for sources in the target's 3x3 cell stencil."""
    M = tx.shape[0]
    indptr = np.zeros(M + 1, dtype=np.int64)
    indices = np.empty(1024, dtype=np.int64)
    data = np.empty(1024, dtype=np.complex128)
    nnz = 0
    for m in range(M):
        for a in range(max(0, tci[m] - 1), min(L, tci[m] + 2)):
            for b in range(max(0, tcj[m] - 1), min(L, tcj[m] + 2)):
                c = a * L + b
                s, e = cell_start[c], cell_start[c + 1]
                indices = _grow(indices, nnz + e - s)
                data = _grow(data, nnz + e - s)
                for p in range(s, e):
                    idx = order[p]
                    if w[idx] == 0.0:
                        continue
                    dx = tx[m] - px[idx]
                    dy = ty[m] - py[idx]
                    dist = math.sqrt(dx * dx + dy * dy)
                    if dist <= tol:
                        continue
                    indices[nnz] = idx
                    data[nnz] = green_r(kappa, dist) * w[idx]
                    nnz += 1
        indptr[m + 1] = nnz
    return indptr, indices[:nnz].copy(), data[:nnz].copy()


@nb.njit(cache=True)
def _direct_all(kappa, tx, ty, px, py, q, tol, out):
    for m in range(tx.shape[0]):
        acc = 0j
        for n in range(px.shape[0]):
            if q[n] == 0:
                continue
            dx = tx[m] - px[n]
            dy = ty[m] - py[n]
            dist = math.sqrt(dx * dx + dy * dy)
            if dist <= tol:
                continue
            acc += green_r(kappa, dist) * q[n]
        out[m] = acc


def direct_sum(kappa: float, sources, targets, q, tol: float = 0.0) -> np.ndarray:
    """``sum_y G(x, y) q_y`` over all source/target pairs farther apart than ``tol``."""
    s = np.asarray(sources, dtype=float)
    t = np.asarray(targets, dtype=float)
    out = np.zeros(t.shape[0], dtype=complex)
    _direct_all(
        float(kappa), t[:, 0].copy(), t[:, 1].copy(), s[:, 0].copy(), s[:, 1].copy(),
        np.asarray(q, dtype=complex), float(tol), out,
    )
    return out


@nb.njit(cache=True)
def _interp_rows_2d(p1, p2, d, n2, lo2, hi2, clamp2):
    """Tensor Lagrange rows; column index ``a * n2 + b`` on a lattice with ``n2`` columns."""
    M = p1.shape[0]
    k = (d + 1) * (d + 1)
    indices = np.empty(M * k, dtype=np.int64)
    data = np.empty(M * k, dtype=np.float64)
    w1 = np.empty(d + 1)
    w2 = np.empty(d + 1)
    for m in range(M):
        s1 = lagrange_weights(p1[m], d, w1)
        if clamp2:
            s2 = lagrange_weights_clamped(p2[m], d, lo2, hi2, w2)
        else:
            s2 = lagrange_weights(p2[m], d, w2)
        n = m * k
        for a in range(d + 1):
            for b in range(d + 1):
                indices[n] = (s1 + a) * n2 + (s2 + b)
                data[n] = w1[a] * w2[b]
                n += 1
    return indices, data


# ---------------------------------------------------------------------------
# evaluator
# ---------------------------------------------------------------------------


def _check_columns(idx, n):
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise ConfigurationError("interpolation stencil leaves the singular lattice")


class _InteriorSing:
    """Singular values on the refined extended lattice of one interior patch."""

    def __init__(self, patch, kappa, opts: OperatorOptions, degree: int):
        self.patch = patch
        N = patch.N
        R = opts.refinement
        self.R, self.d, self.N = R, degree, N
        r, _ = opts.radii(patch)
        self.r = r
        self.margin = int(math.ceil(2 * r * N)) + degree + 2
        interp = InterpParams(R, degree)
        cut = CutoffParams(r, opts.s0 * r)
        n_tau, n_theta = default_polar_counts(r, 1.0 / N)
        self.S, self.W = interior_stencil(kappa, patch.A, 1.0 / N, interp, cut, opts.cov, n_tau, n_theta)
        self.fine_n = (N + 1 + 2 * self.margin) * R

    def contains(self, t1, t2, delta):
        return (t1 >= -delta) & (t1 <= 1 + delta) & (t2 >= -delta) & (t2 <= 1 + delta)

    def interp_matrix(self, t1, t2) -> sparse.csr_matrix:
        p1 = (np.asarray(t1) * self.N + self.margin) * self.R
        p2 = (np.asarray(t2) * self.N + self.margin) * self.R
        idx, dat = _interp_rows_2d(p1, p2, self.d, self.fine_n, 0, 0, False)
        _check_columns(idx, self.fine_n**2)
        k = (self.d + 1) ** 2
        indptr = np.arange(0, k * p1.size + 1, k)
        return sparse.csr_matrix((dat, idx, indptr), shape=(p1.size, self.fine_n**2))

    def values(self, psi_flat) -> np.ndarray:
        psi = psi_flat.reshape(self.patch.shape)
        return interior_singular_lattice(psi, self.S, self.W, self.margin, self.R, sample=False).ravel()


class _BoundarySing:
    """Singular values on the (t1-extended) lattice of one boundary patch."""

    def __init__(self, patch, kappa, opts: OperatorOptions, Q: int, degree: int):
        self.patch = patch
        self.kappa = kappa
        N1, N2 = patch.N1, patch.N2
        self.d = degree
        self.d2 = min(degree, N2)
        self.R = opts.boundary_refinement
        self.r1, self.r2 = opts.radii(patch)
        self.rule = BoundaryRule(
            Q, self.r1, self.r2, opts.s0, opts.cov, InterpParams(self.R, degree), self.d2, opts.n_tau
        )
        self.m1 = int(math.ceil(self.r1 * N1)) + degree // 2 + 2
        self.n1 = N1 + 1 + 2 * self.m1
        i = np.arange(-self.m1, N1 + 1 + self.m1)
        j = np.arange(N2 + 1)
        J, I = np.meshgrid(j, i, indexing="ij")
        self.rows = boundary_singular_rows(patch, kappa, self.rule, (I / N1).ravel(), (J / N2).ravel())
        self.direct_rows = None
        self.direct_index = np.zeros(0, dtype=np.int64)
        self.t2_direct = opts.direct_t2_lines / N2

    def contains(self, t1, t2, delta):
        return (t1 >= -delta) & (t1 <= 1 + delta) & (t2 >= -1e-12) & (t2 <= 1 + 1e-12)

    def interp_matrix(self, t1, t2, own=None) -> sparse.csr_matrix:
        """Interpolation rows; off-line targets close to the curve get exact rows instead."""
        N1, N2 = self.patch.N1, self.patch.N2
        t1 = np.asarray(t1, dtype=float)
        t2 = np.clip(np.asarray(t2, dtype=float), 0.0, 1.0)
        on_line = np.abs(t2 * N2 - np.round(t2 * N2)) < 1e-9
        direct = (~on_line) & (t2 < self.t2_direct)
        if own is not None:
            direct &= ~own
        p2 = np.where(on_line, np.round(t2 * N2), t2 * N2)
        p1 = t1 * N1 + self.m1
        idx, dat = _interp_rows_boundary(p1, p2, self.d, self.d2, self.n1, N2)
        k = (self.d + 1) * (self.d2 + 1)
        indptr = np.arange(0, k * t1.size + 1, k)
        _check_columns(idx, (N2 + 1) * self.n1)
        P = sparse.csr_matrix((dat, idx, indptr), shape=(t1.size, (N2 + 1) * self.n1))
        if np.any(direct):
            keep = sparse.diags((~direct).astype(float))
            P = (keep @ P).tocsr()
            sel = np.nonzero(direct)[0]
            D = boundary_singular_rows(self.patch, self.kappa, self.rule, t1[sel], t2[sel])
            self.direct_index = sel
            self.direct_rows = D
            logger.debug("patch %d: %d targets use exact singular rows", self.patch.id, sel.size)
        else:
            self.direct_index = np.zeros(0, dtype=np.int64)
            self.direct_rows = None
        P.eliminate_zeros()
        return P

    def refine(self, psi_flat):
        return refine_boundary_density(psi_flat.reshape(self.patch.shape).astype(complex), self.R).ravel()

    def values(self, fine) -> np.ndarray:
        return self.rows @ fine


@nb.njit(cache=True)
def _interp_rows_boundary(p1, p2, d, d2, n1, N2):
    """Lagrange rows on a boundary lattice: centred in ``t1``, clamped to ``[0, N2]`` in ``t2``."""
    M = p1.shape[0]
    k = (d + 1) * (d2 + 1)
    indices = np.empty(M * k, dtype=np.int64)
    data = np.empty(M * k, dtype=np.float64)
    w1 = np.empty(d + 1)
    w2 = np.empty(d2 + 1)
    for m in range(M):
        s1 = lagrange_weights(p1[m], d, w1)
        s2 = lagrange_weights_clamped(p2[m], d2, 0, N2, w2)
        n = m * k
        for b in range(d2 + 1):
            for a in range(d + 1):
                indices[n] = (s2 + b) * n1 + (s1 + a)
                data[n] = w1[a] * w2[b]
                n += 1
    return indices, data


def _auto_cells(n_points: int) -> int:
    return max(3, int(round(math.sqrt(n_points / 24.0))))


@dataclass
class Evaluator:
    """``K[u]`` at a fixed set of targets for densities on a fixed grid.

    Parameters
    ----------
    grid : NystromGrid
    targets : ndarray, shape (M, 2), optional
        Defaults to the grid points themselves.
    options : OperatorOptions
    """

    grid: NystromGrid
    targets: Optional[np.ndarray] = None
    options: OperatorOptions = field(default_factory=OperatorOptions)
    stats: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        t0 = time.perf_counter()
        g = self.grid
        opts = self.options
        self.kappa = float(g.config.kappa)
        own = self.targets is None
        self.targets = g.points if own else np.ascontiguousarray(self.targets, dtype=float).reshape(-1, 2)
        M = self.targets.shape[0]
        lo, hi = g.points.min(axis=0), g.points.max(axis=0)
        self.tol = 1e-12 * float(np.max(hi - lo))
        Q = g.Q
        d = opts.degree or Q + 1
        tx = np.ascontiguousarray(self.targets[:, 0])
        ty = np.ascontiguousarray(self.targets[:, 1])
        px = np.ascontiguousarray(g.points[:, 0])
        py = np.ascontiguousarray(g.points[:, 1])
        w = np.ascontiguousarray(g.weights)

        # singular parts and corrections, patch by patch
        self.sing = []
        corr_args = []
        corr_estimate = 0.0
        for k, p in enumerate(g.patchset.patches):
            if own:
                t1, t2 = p.inverse(self.targets)
                sl = g.patch_slice(k)
                t1 = np.array(t1, dtype=float)
                t2 = np.array(t2, dtype=float)
                t1[sl], t2[sl] = g.t1[sl], g.t2[sl]
                own_mask = np.zeros(M, dtype=bool)
                own_mask[sl] = True
            else:
                t1, t2 = (np.asarray(a, dtype=float) for a in p.inverse(self.targets))
                own_mask = None
            if p.kind == "boundary":
                S = _BoundarySing(p, self.kappa, opts, Q, d)
                inside = S.contains(t1, t2, min(S.r1, 0.1))
                r_a, r_b, kind = S.r1, S.r2, 0
            else:
                S = _InteriorSing(p, self.kappa, opts, d)
                inside = S.contains(t1, t2, min(S.r, 0.1))
                r_a, r_b, kind = S.r, S.r, 1
            sel = np.nonzero(inside)[0]
            if p.kind == "boundary":
                S.P = S.interp_matrix(t1[sel], t2[sel], None if own_mask is None else own_mask[sel])
                S.direct_index = sel[S.direct_index]
            else:
                S.P = S.interp_matrix(t1[sel], t2[sel])
            S.target_index = sel
            self.sing.append(S)
            args = (
                self.kappa, tx[sel], ty[sel], np.clip(t1[sel], -1, 2), np.clip(t2[sel], -1, 2), kind,
                p.N1, p.N2, int(g.offsets[k]), r_a, r_b, opts.s0, px, py, w, self.tol,
            )
            corr_args.append((sel, args))
            corr_estimate += sel.size * _window_size(kind, r_a, r_b, p.N1, p.N2)
        store = opts.store_correction
        if store is None:
            store = corr_estimate <= opts.max_stored_nnz
        counts = np.zeros(M + 1, dtype=np.int64)
        if store:
            for sel, args in corr_args:
                _correction_count(*args[1:], sel, counts[1:])
        indptr = np.cumsum(counts)
        indices = np.empty(indptr[-1], dtype=np.int32)
        data = np.empty(indptr[-1], dtype=np.complex64)
        if store:
            fill = indptr[:-1].copy()
            for sel, args in corr_args:
                _correction_fill(*args, sel, fill, indices, data)
            corr_args = []
        corr = _CompactCSR(indptr, indices, data)
        self.corr = corr
        self._corr_args = corr_args
        t_sing = time.perf_counter() - t0

        # near field and far field
        if opts.accelerate:
            box_lo = np.minimum(lo, self.targets.min(axis=0))
            box_hi = np.maximum(hi, self.targets.max(axis=0))
            L = opts.cells_per_side or _auto_cells(max(g.size, M))
            self.cells = build_cells(box_lo, box_hi, self.kappa, L)
            neq = opts.neq or neq_for(self.kappa, self.cells.H, opts.eps)
            sc = self.cells.flat_index(g.points)
            order = np.argsort(sc, kind="stable").astype(np.int64)
            cell_start = np.concatenate([[0], np.cumsum(np.bincount(sc, minlength=L * L))]).astype(np.int64)
            ti, tj = self.cells.cell_index(self.targets)
            ip, ix, dt = _near_rows(self.kappa, tx, ty, ti, tj, L, cell_start, order, px, py, w, self.tol)
            near = _CompactCSR(ip, ix.astype(np.int32), dt.astype(np.complex64))
            del ip, ix, dt
            self.accelerator = Accelerator(self.kappa, g.points, self.targets, self.cells, neq, basis=opts.basis)
            self.stats.update(self.accelerator.stats)
        else:
            near = _CompactCSR(np.zeros(M + 1, dtype=np.int64), np.zeros(0, np.int32), np.zeros(0, np.complex64))
            self.cells = None
            self.accelerator = None
        self.near = near
        self.stats.update(
            targets=M,
            unknowns=g.size,
            near_nnz=int(self.near.nnz),
            correction_nnz=int(self.corr.nnz),
            correction_stored=bool(store),
            singular_setup=t_sing,
            setup_time=time.perf_counter() - t0,
        )
        logger.info(
            "evaluator: %d targets, %d unknowns, near nnz %d, correction nnz %d, setup %.2fs",
            M, g.size, self.near.nnz, self.corr.nnz, self.stats["setup_time"],
        )

    def _psi(self, phi: np.ndarray, k: int) -> np.ndarray:
        g = self.grid
        sl = g.patch_slice(k)
        return phi[sl] * g.omega[sl] * g.jacobian[sl]

    def singular(self, phi: np.ndarray) -> np.ndarray:
        """Sum of the singular parts at the targets."""
        out = np.zeros(self.targets.shape[0], dtype=complex)
        for k, S in enumerate(self.sing):
            if S.target_index.size == 0:
                continue
            psi = self._psi(phi, k)
            if isinstance(S, _BoundarySing):
                fine = S.refine(psi)
                out[S.target_index] += S.P @ S.values(fine)
                if S.direct_rows is not None:
                    out[S.direct_index] += S.direct_rows @ fine
            else:
                out[S.target_index] += S.P @ S.values(psi)
        return out

    def apply(self, phi: np.ndarray, direct: bool = False) -> np.ndarray:
        """``K`` applied to the contrast-weighted density ``phi = m u``.

        ``direct=True`` bypasses the accelerator and sums all pairs.
        """
        phi = np.asarray(phi, dtype=complex)
        q = self.grid.weights * phi
        out = self.singular(phi) - self.correction(phi)
        if direct or self.accelerator is None:
            return out + direct_sum(self.kappa, self.grid.points, self.targets, q, self.tol)
        return self.near.matvec(phi, out) + self.accelerator.apply(q)

    def correction(self, phi: np.ndarray) -> np.ndarray:
        """Cutoff-weighted lattice sums removed from the regular part."""
        out = self.corr.matvec(phi, np.zeros(self.targets.shape[0], dtype=complex))
        for sel, args in self._corr_args:
            out[sel] += _correction_apply(*args, phi)
        return out


@dataclass
class Workspace:
    """Everything needed to apply the Lippmann-Schwinger operator on a grid."""

    grid: NystromGrid
    options: OperatorOptions
    evaluator: Evaluator

    @property
    def kappa(self) -> float:
        return float(self.grid.config.kappa)

    @property
    def size(self) -> int:
        return self.grid.size


def build_workspace(grid: NystromGrid, options: Optional[OperatorOptions] = None) -> Workspace:
    """Precompute singular rules, corrections and the accelerator for ``grid``."""
    options = options or OperatorOptions()
    return Workspace(grid, options, Evaluator(grid, None, options))


def incident_field(grid_or_points, kappa: float, direction=(1.0, 0.0)) -> np.ndarray:
    """Plane wave ``exp(i kappa d . x)`` at grid points or an ``(n, 2)`` array."""
    pts = grid_or_points.points if isinstance(grid_or_points, NystromGrid) else np.asarray(grid_or_points, float)
    d = np.asarray(direction, dtype=float)
    if abs(np.hypot(*d) - 1.0) > 1e-12:
        raise ValueError("direction must be a unit vector")
    return np.exp(1j * kappa * (pts @ d))


def apply_K(ws: Workspace, u: np.ndarray, direct: bool = False) -> np.ndarray:
    """Discrete ``K[u] = int G m u`` at the grid points."""
    u = np.asarray(u)
    if u.shape != (ws.size,):
        raise ValueError(f"density must have shape ({ws.size},)")
    return ws.evaluator.apply(ws.grid.contrast * u, direct=direct)


def apply_LS(ws: Workspace, u: np.ndarray, direct: bool = False) -> np.ndarray:
    """``u + kappa^2 K[u]``."""
    return np.asarray(u, dtype=complex) + ws.kappa**2 * apply_K(ws, u, direct=direct)
