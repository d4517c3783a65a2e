"""Equivalent-source FFT acceleration of non-adjacent interactions.

The bounding square of the sources is split into ``L x L`` cells of side
``H``.  For every cell the field of its true sources is replaced by monopoles
and dipoles (normal ``(1, 0)``) at ``N_eq`` equispaced points on each of its
two vertical faces, fitted by least squares on the perimeter of the
surrounding ``3H`` square.  All equivalent sources sit on one global
Cartesian lattice, so their combined field on a lattice of sample points is a
discrete convolution evaluated with FFTs.  Contributions of the ``3 x 3``
neighbourhood are then removed directly, leaving a field that solves the
homogeneous Helmholtz equation inside the cell.  It is represented by a
small expansion (Fourier-Bessel functions or plane waves) fitted to the
samples and evaluated at the true targets.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numba as nb
import numpy as np
from scipy import fft as sfft
from scipy import sparse

from .kernel import green_dnu_r, green_r
from .special_functions import bessel_j

logger = logging.getLogger(__name__)

__all__ = [
    "AcceleratorError",
    "CellDecomposition",
    "build_cells",
    "neq_for",
    "EquivalentSourceFit",
    "fit_equivalent_sources",
    "SampleLattice",
    "global_convolution",
    "subtract_adjacent",
    "InteriorExpansion",
    "plane_wave_interior",
    "Accelerator",
    "direct_nonadjacent",
]


class AcceleratorError(RuntimeError):
    """Accelerator setup failed (resonant cell, rank deficiency, bad lattice)."""


# ---------------------------------------------------------------------------
# Cells
# ---------------------------------------------------------------------------


def _is_resonant(kappa: float, H: float, tol: float = 1e-6) -> bool:
    lam = (kappa * H / math.pi) ** 2
    pmax = int(math.sqrt(lam)) + 2
    for p in range(1, pmax + 1):
        for q in range(1, pmax + 1):
            if abs(lam - (p * p + q * q)) <= tol * max(1.0, lam):
                return True
    return False


@dataclass(frozen=True)
class CellDecomposition:
    """Square of side ``A`` with lower-left corner ``origin`` split into ``L^2`` cells."""

    origin: tuple
    A: float
    L: int

    @property
    def H(self) -> float:
        return self.A / self.L

    def cell_index(self, points) -> tuple:
        """Cell coordinates ``(i, j)`` of each point, clipped to the square."""
        p = np.asarray(points, dtype=float)
        i = np.floor((p[..., 0] - self.origin[0]) / self.H).astype(np.int64)
        j = np.floor((p[..., 1] - self.origin[1]) / self.H).astype(np.int64)
        return np.clip(i, 0, self.L - 1), np.clip(j, 0, self.L - 1)

    def flat_index(self, points) -> np.ndarray:
        i, j = self.cell_index(points)
        return i * self.L + j

    def neighbours(self, i: int, j: int) -> list:
        """Cells of the ``3 x 3`` stencil around ``(i, j)``, clipped at the edge."""
        return [
            (a, b)
            for a in range(max(0, i - 1), min(self.L, i + 2))
            for b in range(max(0, j - 1), min(self.L, j + 2))
        ]

    def cell_origin(self, flat) -> np.ndarray:
        flat = np.asarray(flat)
        i, j = np.divmod(flat, self.L)
        return np.stack([self.origin[0] + i * self.H, self.origin[1] + j * self.H], axis=-1)


def build_cells(lo, hi, kappa: float, L: int, max_inflation: float = 0.05) -> CellDecomposition:
    """Resonance-safe cell decomposition of the square around ``[lo, hi]``.

    Raises
    ------
    AcceleratorError
        If ``L < 3`` or no admissible size exists within the inflation budget.
    """
    if L < 3:
        raise AcceleratorError("need at least 3 cells per side")
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    centre = 0.5 * (lo + hi)
    A0 = float(np.max(hi - lo)) * (1.0 + 1e-9)
    for step in range(0, 101):
        A = A0 * (1.0 + max_inflation * step / 100.0)
        if not _is_resonant(kappa, A / L):
            if step:
                logger.info("cell side inflated by %.2f%% to avoid a resonance", 100 * (A / A0 - 1))
            origin = tuple(centre - 0.5 * A)
            return CellDecomposition(origin, A, int(L))
    raise AcceleratorError("cannot avoid a Dirichlet resonance of the cell")


def neq_for(kappa: float, H: float, eps: float) -> int:
    """Sources per face: ``max(ceil(kappa H) + 2, ceil(log(1/eps) / (2 log(3/sqrt 2))))``."""
    floor = int(math.ceil(math.log(1.0 / eps) / (2.0 * math.log(3.0 / math.sqrt(2.0))))) if eps < 1 else 1
    return max(int(math.ceil(kappa * H)) + 2, floor)


# ---------------------------------------------------------------------------
# Kernels on point sets
# ---------------------------------------------------------------------------


@nb.njit(cache=True)
def _kernel_matrix(kappa, tx, ty, sx, sy, dipole):
    out = np.zeros((tx.shape[0], sx.shape[0]), dtype=np.complex128)
    for i in range(tx.shape[0]):
        for j in range(sx.shape[0]):
            dx = tx[i] - sx[j]
            dy = ty[i] - sy[j]
            r = math.sqrt(dx * dx + dy * dy)
            if r == 0.0:
                continue
            if dipole:
                out[i, j] = green_dnu_r(kappa, dx, dy, 1.0, 0.0)
            else:
                out[i, j] = green_r(kappa, r)
    return out


def kernel_matrix(kappa, targets, sources, dipole=False) -> np.ndarray:
    """Dense ``G`` (or ``dG/dnu_y`` with ``nu = (1, 0)``); coincident pairs give 0."""
    t = np.ascontiguousarray(targets, dtype=float).reshape(-1, 2)
    s = np.ascontiguousarray(sources, dtype=float).reshape(-1, 2)
    return _kernel_matrix(float(kappa), t[:, 0].copy(), t[:, 1].copy(), s[:, 0].copy(), s[:, 1].copy(), dipole)


# ---------------------------------------------------------------------------
# Equivalent sources
# ---------------------------------------------------------------------------


def _square_perimeter(n: int, lo: float, side: float) -> np.ndarray:
    """``n`` points equispaced by arclength (half-step offset) on a square."""
    s = (np.arange(n) + 0.5) * 4.0 * side / n
    k = np.minimum((s // side).astype(int), 3)
    u = s - k * side
    pts = np.empty((n, 2))
    pts[k == 0] = np.c_[lo + u[k == 0], np.full((k == 0).sum(), lo)]
    pts[k == 1] = np.c_[np.full((k == 1).sum(), lo + side), lo + u[k == 1]]
    pts[k == 2] = np.c_[lo + side - u[k == 2], np.full((k == 2).sum(), lo + side)]
    pts[k == 3] = np.c_[np.full((k == 3).sum(), lo), lo + side - u[k == 3]]
    return pts


@dataclass
class EquivalentSourceFit:
    """Shared least-squares machinery for one cell size.

    Unknowns are ordered ``[monopoles left, monopoles right, dipoles left,
    dipoles right]``; face points sit at ``y = (m + 1/2) H / N_eq`` in cell
    coordinates (cell ``[0, H]^2``).

    Parameters
    ----------
    kappa, H : float
    neq : int
        Sources per face.
    ncoll : int, optional
        Collocation points on the ``3H`` perimeter; default ``16 neq``.
    """

    kappa: float
    H: float
    neq: int
    ncoll: Optional[int] = None
    rcond: float = 1e-13

    def __post_init__(self) -> None:
        if self.ncoll is None:
            self.ncoll = 16 * self.neq
        H, n = self.H, self.neq
        y = (np.arange(n) + 0.5) * H / n
        self.face_points = np.concatenate([np.c_[np.zeros(n), y], np.c_[np.full(n, H), y]])
        self.collocation = _square_perimeter(self.ncoll, -H, 3.0 * H)
        A = np.hstack(
            [
                kernel_matrix(self.kappa, self.collocation, self.face_points),
                kernel_matrix(self.kappa, self.collocation, self.face_points, dipole=True),
            ]
        )
        self.Qm, self.Rm = np.linalg.qr(A)
        d = np.abs(np.diag(self.Rm))
        self.condition = float(d.max() / d.min()) if d.min() > 0 else np.inf
        if not np.isfinite(self.condition) or d.min() < self.rcond * d.max():
            raise AcceleratorError(f"equivalent-source system is rank deficient (ratio {self.condition:.2e})")
        self.matrix = A

    @property
    def n_unknowns(self) -> int:
        return 4 * self.neq

    def transfer(self, local_sources: np.ndarray) -> np.ndarray:
        """Matrix mapping true source strengths (cell coordinates) to equivalent strengths."""
        rhs = kernel_matrix(self.kappa, self.collocation, local_sources)
        return np.linalg.solve(self.Rm, self.Qm.conj().T @ rhs) if rhs.size else np.zeros((self.n_unknowns, 0), complex)

    def field(self, strengths: np.ndarray, local_targets: np.ndarray) -> np.ndarray:
        """Field of equivalent strengths at points in cell coordinates."""
        M = np.hstack(
            [
                kernel_matrix(self.kappa, local_targets, self.face_points),
                kernel_matrix(self.kappa, local_targets, self.face_points, dipole=True),
            ]
        )
        return M @ strengths


def fit_equivalent_sources(fit: EquivalentSourceFit, local_sources, strengths) -> np.ndarray:
    """Equivalent strengths reproducing the field of weighted sources in one cell.

    The collocation field of the true sources is matched in the least-squares
    sense using the factorisation shared by all cells.
    """
    strengths = np.asarray(strengths, dtype=complex)
    if strengths.size == 0 or not np.any(strengths):
        return np.zeros(fit.n_unknowns, dtype=complex)
    return fit.transfer(np.asarray(local_sources, dtype=float)) @ strengths


# ---------------------------------------------------------------------------
# Global sample lattice and convolution
# ---------------------------------------------------------------------------


@dataclass
class SampleLattice:
    """Global lattice carrying equivalent sources and field samples.

    Columns sit at ``x = a H / n_v`` (``a = 0..L n_v``), rows at
    ``y = (b + 1/2) H / n_b`` (``b = 0..L n_b - 1``) with ``n_b = s N_eq``,
    ``s`` odd, so every face source is a lattice node.
    """

    cells: CellDecomposition
    kappa: float
    neq: int
    n_v: int = 8
    s: int = 1

    def __post_init__(self) -> None:
        if self.s % 2 == 0:
            raise AcceleratorError("row oversampling factor must be odd")
        self.n_b = self.s * self.neq
        L = self.cells.L
        self.shape = (L * self.n_v + 1, L * self.n_b)
        self.dx = self.cells.H / self.n_v
        self.dy = self.cells.H / self.n_b
        n1 = sfft.next_fast_len(2 * self.shape[0])
        n2 = sfft.next_fast_len(2 * self.shape[1])
        self.fft_shape = (n1, n2)
        a = np.arange(-(self.shape[0] - 1), self.shape[0])
        b = np.arange(-(self.shape[1] - 1), self.shape[1])
        km, kd = _offset_kernels(float(self.kappa), a.astype(np.float64) * self.dx, b.astype(np.float64) * self.dy)
        self._kern_hat = []
        for k in (km, kd):
            pad = np.zeros(self.fft_shape, dtype=complex)
            pad[np.ix_(a % n1, b % n2)] = k
            self._kern_hat.append(sfft.fft2(pad))

    def source_rows(self, j: int) -> np.ndarray:
        m = np.arange(self.neq)
        return (j * self.neq + m) * self.s + (self.s - 1) // 2

    def cell_sample_points(self) -> np.ndarray:
        """Sample points of one cell in cell coordinates, ordered (column, row)."""
        xs = np.arange(self.n_v + 1) * self.dx
        ys = (np.arange(self.n_b) + 0.5) * self.dy
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        return np.stack([X.ravel(), Y.ravel()], axis=-1)


@nb.njit(cache=True)
def _offset_kernels(kappa, ox, oy):
    km = np.zeros((ox.shape[0], oy.shape[0]), dtype=np.complex128)
    kd = np.zeros((ox.shape[0], oy.shape[0]), dtype=np.complex128)
    for i in range(ox.shape[0]):
        for j in range(oy.shape[0]):
            r = math.sqrt(ox[i] * ox[i] + oy[j] * oy[j])
            if r == 0.0:
                continue
            km[i, j] = green_r(kappa, r)
            kd[i, j] = green_dnu_r(kappa, ox[i], oy[j], 1.0, 0.0)
    return km, kd


def global_convolution(lattice: SampleLattice, strengths: np.ndarray) -> np.ndarray:
    """Field of all equivalent sources at every lattice node (zero-offset term omitted).

    Parameters
    ----------
    strengths : ndarray, shape (L*L, 4*neq)
        Equivalent strengths per cell (flat index ``i L + j``).

    Returns
    -------
    ndarray of shape ``lattice.shape``.
    """
    L = lattice.cells.L
    neq = lattice.neq
    strengths = np.asarray(strengths, dtype=complex)
    if strengths.shape != (L * L, 4 * neq):
        raise AcceleratorError("strength array does not match the lattice")
    mono = np.zeros(lattice.fft_shape, dtype=complex)
    dip = np.zeros(lattice.fft_shape, dtype=complex)
    st = strengths.reshape(L, L, 4, neq)
    rows = np.concatenate([lattice.source_rows(j) for j in range(L)])
    for face in (0, 1):
        # left faces of column i and right faces of column i-1 share lattice column i*n_v
        for i in range(L):
            col = (i + face) * lattice.n_v
            mono[col, rows] += st[i, :, face, :].ravel()
            dip[col, rows] += st[i, :, 2 + face, :].ravel()
    out = sfft.ifft2(sfft.fft2(mono) * lattice._kern_hat[0] + sfft.fft2(dip) * lattice._kern_hat[1])
    return out[: lattice.shape[0], : lattice.shape[1]]


def _adjacent_matrix(lattice: SampleLattice, fit: EquivalentSourceFit) -> np.ndarray:
    """Field at one cell's samples from the equivalent sources of its 3x3 stencil.

    Columns are ordered by stencil offset ``(di, dj)`` in row-major order over
    ``{-1, 0, 1}^2`` and then by unknown.  Offsets are formed in lattice
    units exactly as in the global convolution.
    """
    n_v, n_b = lattice.n_v, lattice.n_b
    sa = np.repeat(np.arange(n_v + 1), n_b)
    sb = np.tile(np.arange(n_b), n_v + 1)
    blocks = []
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            cols = []
            for kind in (0, 1):
                for face in (0, 1):
                    src_a = (di + face) * n_v
                    src_b = lattice.source_rows(dj)
                    da, db = np.broadcast_arrays(sa[:, None] - src_a, sb[:, None] - src_b[None, :])
                    ox = (da * lattice.dx).ravel()
                    oy = (db * lattice.dy).ravel()
                    km, kd = _pair_kernels(float(lattice.kappa), ox, oy)
                    k = (kd if kind else km).reshape(sa.size, src_b.size)
                    cols.append(k)
            blocks.append(np.hstack(cols))
    return np.hstack(blocks)


@nb.njit(cache=True)
def _pair_kernels(kappa, ox, oy):
    km = np.zeros(ox.shape[0], dtype=np.complex128)
    kd = np.zeros(ox.shape[0], dtype=np.complex128)
    for i in range(ox.shape[0]):
        r = math.sqrt(ox[i] * ox[i] + oy[i] * oy[i])
        if r == 0.0:
            continue
        km[i] = green_r(kappa, r)
        kd[i] = green_dnu_r(kappa, ox[i], oy[i], 1.0, 0.0)
    return km, kd


def _cell_samples(lattice: SampleLattice, values: np.ndarray, cells_flat: np.ndarray) -> np.ndarray:
    L = lattice.cells.L
    i, j = np.divmod(cells_flat, L)
    a = i[:, None] * lattice.n_v + np.arange(lattice.n_v + 1)[None, :]
    b = j[:, None] * lattice.n_b + np.arange(lattice.n_b)[None, :]
    return values[a[:, :, None], b[:, None, :]].reshape(cells_flat.size, -1)


def _stencil_strengths(L: int, strengths: np.ndarray, cells_flat: np.ndarray) -> np.ndarray:
    i, j = np.divmod(cells_flat, L)
    parts = []
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            ii, jj = i + di, j + dj
            ok = (ii >= 0) & (ii < L) & (jj >= 0) & (jj < L)
            blk = np.zeros((cells_flat.size, strengths.shape[1]), dtype=complex)
            blk[ok] = strengths[(ii * L + jj)[ok]]
            parts.append(blk)
    return np.hstack(parts)


def subtract_adjacent(lattice, adjacency, strengths, values, cells_flat) -> np.ndarray:
    """Samples of the non-adjacent field for the listed cells.

    Parameters
    ----------
    adjacency : ndarray
        Matrix from :func:`_adjacent_matrix` (shared by all cells).
    strengths : ndarray, shape (L*L, 4*neq)
    values : ndarray
        Output of :func:`global_convolution`.
    cells_flat : ndarray of int
        Cells whose samples are requested.

    Returns
    -------
    ndarray, shape (len(cells_flat), n_samples)
    """
    samples = _cell_samples(lattice, values, cells_flat)
    near = _stencil_strengths(lattice.cells.L, strengths, cells_flat) @ adjacency.T
    return samples - near


# ---------------------------------------------------------------------------
# Interior expansions
# ---------------------------------------------------------------------------


@dataclass
class InteriorExpansion:
    """Helmholtz field in a cell fitted to samples (shared least-squares operator).

    Parameters
    ----------
    kappa, H : float
    sample_points : ndarray, shape (n, 2)
        Sample locations in cell coordinates.
    basis : {"bessel", "plane"}
        ``bessel`` uses ``J_|n|(kappa rho) exp(i n phi)`` about the cell centre,
        ``|n| <= order``; ``plane`` uses ``n_waves`` plane waves with equispaced
        directions.
    """

    kappa: float
    H: float
    sample_points: np.ndarray
    basis: str = "bessel"
    order: Optional[int] = None
    n_waves: Optional[int] = None
    rcond: float = 1e-13

    def __post_init__(self) -> None:
        if self.basis not in ("bessel", "plane"):
            raise AcceleratorError("basis must be 'bessel' or 'plane'")
        if self.basis == "bessel" and self.order is None:
            self.order = int(math.ceil(self.kappa * self.H / math.sqrt(2.0))) + 18
        if self.basis == "plane" and self.n_waves is None:
            self.n_waves = 64
        B = self.basis_matrix(self.sample_points)
        self.scale = 1.0 / np.maximum(np.linalg.norm(B, axis=0), 1e-300)
        Bs = B * self.scale
        U, s, Vh = np.linalg.svd(Bs, full_matrices=False)
        keep = s > self.rcond * s[0]
        if keep.sum() < min(Bs.shape) and self.basis == "bessel":
            logger.debug("expansion fit truncated to %d of %d singular values", keep.sum(), s.size)
        self.pinv = (Vh[keep].conj().T / s[keep]) @ U[:, keep].conj().T * self.scale[:, None]
        self.condition = float(s[0] / s[keep][-1])

    @property
    def n_coefficients(self) -> int:
        return 2 * self.order + 1 if self.basis == "bessel" else self.n_waves

    def basis_matrix(self, local_points) -> np.ndarray:
        p = np.asarray(local_points, dtype=float).reshape(-1, 2) - 0.5 * self.H
        if self.basis == "plane":
            ang = 2.0 * np.pi * np.arange(self.n_waves) / self.n_waves
            return np.exp(1j * self.kappa * (p[:, :1] * np.cos(ang) + p[:, 1:] * np.sin(ang)))
        rho = np.hypot(p[:, 0], p[:, 1])
        phi = np.arctan2(p[:, 1], p[:, 0])
        n = np.arange(-self.order, self.order + 1)
        J = bessel_j(np.abs(n)[None, :], self.kappa * rho[:, None])
        return J * np.exp(1j * n[None, :] * phi[:, None])

    def coefficients(self, samples: np.ndarray) -> np.ndarray:
        """Least-squares coefficients; rows of ``samples`` are independent cells."""
        return np.asarray(samples) @ self.pinv.T

    def evaluate(self, coeffs: np.ndarray, local_points) -> np.ndarray:
        return self.basis_matrix(local_points) @ coeffs


def plane_wave_interior(kappa, H, sample_points, samples, basis="plane", **kw):
    """Fit an interior expansion to one cell's samples and return an evaluator.

    Zero samples give zero coefficients (minimum-norm solution).
    """
    exp = InteriorExpansion(kappa, H, np.asarray(sample_points, dtype=float), basis=basis, **kw)
    c = exp.coefficients(np.asarray(samples)[None, :])[0]
    return lambda pts: exp.evaluate(c, pts)


# ---------------------------------------------------------------------------
# Full accelerator
# ---------------------------------------------------------------------------


@dataclass
class Accelerator:
    """Non-adjacent part of ``sum_y G(x, y) q_y`` for fixed source and target sets.

    Parameters
    ----------
    kappa : float
    sources, targets : ndarray, shape (n, 2)
    cells : CellDecomposition
        Must contain all sources and targets.
    neq : int
        Equivalent sources per face.
    basis : str
        Interior expansion basis.
    """

    kappa: float
    sources: np.ndarray
    targets: np.ndarray
    cells: CellDecomposition
    neq: int
    basis: str = "bessel"
    n_v: Optional[int] = None
    order: Optional[int] = None
    n_waves: Optional[int] = None
    stats: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        t0 = time.perf_counter()
        L, H = self.cells.L, self.cells.H
        self.fit = EquivalentSourceFit(self.kappa, H, self.neq)
        order = self.order
        if self.basis == "bessel" and order is None:
            order = int(math.ceil(self.kappa * H / math.sqrt(2.0))) + 18
        ncoef = 2 * order + 1 if self.basis == "bessel" else (self.n_waves or min(256, 4 * self.neq))
        s = 1
        n_v = self.n_v or max(8, self.neq)
        while (n_v + 1) * s * self.neq < 3 * ncoef:
            s += 2
            n_v = self.n_v or max(8, s * self.neq)
        self.n_v = n_v
        self.lattice = SampleLattice(self.cells, self.kappa, self.neq, n_v, s)
        self.adjacency = _adjacent_matrix(self.lattice, self.fit)
        self.expansion = InteriorExpansion(
            self.kappa, H, self.lattice.cell_sample_points(), basis=self.basis, order=order,
            n_waves=None if self.basis == "bessel" else ncoef,
        )
        # source side: block-sparse transfer matrix
        src = np.asarray(self.sources, dtype=float)
        sc = self.cells.flat_index(src)
        order_s = np.argsort(sc, kind="stable")
        counts = np.bincount(sc, minlength=L * L)
        starts = np.concatenate([[0], np.cumsum(counts)])
        rows, cols, vals = [], [], []
        nun = self.fit.n_unknowns
        for c in np.nonzero(counts)[0]:
            idx = order_s[starts[c] : starts[c + 1]]
            local = src[idx] - self.cells.cell_origin(c)
            T = self.fit.transfer(local)
            rr, cc = np.meshgrid(c * nun + np.arange(nun), idx, indexing="ij")
            rows.append(rr.ravel())
            cols.append(cc.ravel())
            vals.append(T.ravel())
        self.transfer = sparse.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(L * L * nun, src.shape[0])
        )
        # target side: block-sparse expansion evaluation
        tgt = np.asarray(self.targets, dtype=float)
        tc = self.cells.flat_index(tgt)
        self.target_cells = np.unique(tc)
        pos = np.searchsorted(self.target_cells, tc)
        local = tgt - self.cells.cell_origin(tc)
        E = self.expansion.basis_matrix(local)
        nc = E.shape[1]
        rr = np.repeat(np.arange(tgt.shape[0]), nc)
        cc = (pos[:, None] * nc + np.arange(nc)[None, :]).ravel()
        self.evaluation = sparse.csr_matrix((E.ravel(), (rr, cc)), shape=(tgt.shape[0], self.target_cells.size * nc))
        self.stats.update(
            setup_time=time.perf_counter() - t0,
            L=L,
            H=H,
            kappaH=self.kappa * H,
            neq=self.neq,
            fit_condition=self.fit.condition,
            expansion_condition=self.expansion.condition,
            samples_per_cell=self.lattice.cell_sample_points().shape[0],
            coefficients=nc,
        )
        logger.info(
            "accelerator: L=%d kappa*H=%.3g neq=%d basis=%s setup %.2fs",
            L, self.kappa * H, self.neq, self.basis, self.stats["setup_time"],
        )

    def strengths(self, q: np.ndarray) -> np.ndarray:
        L = self.cells.L
        return (self.transfer @ np.asarray(q, dtype=complex)).reshape(L * L, self.fit.n_unknowns)

    def apply(self, q: np.ndarray) -> np.ndarray:
        """Non-adjacent field at the targets for source weights ``q``."""
        sig = self.strengths(q)
        vals = global_convolution(self.lattice, sig)
        samp = subtract_adjacent(self.lattice, self.adjacency, sig, vals, self.target_cells)
        coef = self.expansion.coefficients(samp)
        return self.evaluation @ coef.ravel()


@nb.njit(cache=True)
def _direct_nonadj(kappa, tx, ty, tci, tcj, sx, sy, sci, scj, q, out):
    for i in range(tx.shape[0]):
        acc = 0j
        for j in range(sx.shape[0]):
            if abs(tci[i] - sci[j]) <= 1 and abs(tcj[i] - scj[j]) <= 1:
                continue
            dx = tx[i] - sx[j]
            dy = ty[i] - sy[j]
            acc += green_r(kappa, math.sqrt(dx * dx + dy * dy)) * q[j]
        out[i] = acc


def direct_nonadjacent(kappa, cells: CellDecomposition, sources, targets, q) -> np.ndarray:
    """Reference ``O(N M)`` sum over sources outside each target's 3x3 stencil."""
    s = np.asarray(sources, dtype=float)
    t = np.asarray(targets, dtype=float)
    si, sj = cells.cell_index(s)
    ti, tj = cells.cell_index(t)
    out = np.zeros(t.shape[0], dtype=complex)
    _direct_nonadj(
        float(kappa), t[:, 0].copy(), t[:, 1].copy(), ti, tj, s[:, 0].copy(), s[:, 1].copy(), si, sj,
        np.asarray(q, dtype=complex), out,
    )
    return out
