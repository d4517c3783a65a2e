"""Patch-level integration rules.

Everything here works in the parameter square ``[0, 1]^2`` of a patch.  The
integrand of a patch integral is written as ``G(x, xi(t)) psi(t)`` where
``psi = phi * omega * J`` already contains the partition-of-unity weight and
the Jacobian.  Around a target ``t_x`` the integral is split with a smooth
cutoff ``eta``:

* ``eta * G * psi`` is integrated by a singular rule (polar coordinates with a
  graded radial variable for interior patches, a graded inner variable plus
  target-anchored Newton-Cotes panels for boundary patches);
* ``(1 - eta) * G * psi`` is smooth and is summed on the lattice.

Densities at off-lattice nodes come from Fourier refinement followed by
local Lagrange interpolation.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numba as nb
import numpy as np
from scipy import sparse

from ._maps import (
    boundary_point,
    cutoff,
    lagrange_weights,
    lagrange_weights_clamped,
)
from .kernel import green_r

logger = logging.getLogger(__name__)

__all__ = [
    "ConfigurationError",
    "CutoffParams",
    "CovParams",
    "InterpParams",
    "chi",
    "newton_cotes_weights",
    "composite_newton_cotes",
    "fourier_refine",
    "fourier_poly_interp",
    "midpoint_nodes",
    "interior_stencil",
    "interior_singular_lattice",
    "singular_interior",
    "BoundaryRule",
    "boundary_singular_rows",
    "refine_boundary_density",
    "default_polar_counts",
    "singular_boundary",
    "regular_patch_sum",
]

SUPPORTED_Q = (3, 5, 7)

# Closed Newton-Cotes weights for unit spacing.
_NC_UNIT = {
    3: np.array([1.0, 4.0, 1.0]) / 3.0,
    5: np.array([7.0, 32.0, 12.0, 32.0, 7.0]) * 2.0 / 45.0,
    7: np.array([41.0, 216.0, 27.0, 272.0, 27.0, 216.0, 41.0]) / 140.0,
}


class ConfigurationError(ValueError):
    """Invalid discretisation parameters."""


@dataclass(frozen=True)
class CutoffParams:
    """Cutoff ``chi`` with ``chi = 1`` on ``[0, r0/r]`` and ``chi = 0`` on ``[1, inf)``.

    Parameters
    ----------
    r : float
        Support radius in parameter space.
    r0 : float
        Radius of the plateau, ``0 < r0 < r``.
    """

    r: float
    r0: float

    def __post_init__(self) -> None:
        if not (0.0 < self.r0 < self.r):
            raise ConfigurationError("cutoff requires 0 < r0 < r")

    @property
    def s0(self) -> float:
        return self.r0 / self.r


@dataclass(frozen=True)
class CovParams:
    """Odd graded change of variable ``rho`` on ``[-1, 1]`` with ``rho(+-1) = +-1``.

    ``kind="power"`` gives ``rho = tau**(M+1)``.  ``kind="sine"`` gives the
    map whose derivative is proportional to ``sin(pi tau / 2)**M``; both have
    ``M`` vanishing derivatives at the origin, but the sine map keeps the
    derivative bounded by ``C(M, M/2)``-scale constants instead of ``M+1``
    and resolves the cutoff layer with fewer nodes.
    """

    M: int = 2
    kind: str = "sine"

    def __post_init__(self) -> None:
        if self.M < 0 or self.M % 2:
            raise ConfigurationError("M must be an even non-negative integer")
        if self.kind not in ("sine", "power"):
            raise ConfigurationError("kind must be 'sine' or 'power'")

    def _coeffs(self):
        q = self.M // 2
        norm = math.comb(2 * q, q)
        k = np.arange(1, q + 1)
        c = np.array([(-1) ** int(j) * math.comb(2 * q, q - int(j)) for j in k], dtype=float)
        return k, 2.0 * c / norm

    def value(self, tau):
        tau = np.asarray(tau, dtype=float)
        if self.kind == "power":
            return tau ** (self.M + 1)
        k, c = self._coeffs()
        out = tau.copy()
        for kk, cc in zip(k, c):
            out = out + cc * np.sin(kk * np.pi * tau) / (kk * np.pi)
        return out

    def derivative(self, tau):
        tau = np.asarray(tau, dtype=float)
        if self.kind == "power":
            return (self.M + 1) * tau**self.M
        k, c = self._coeffs()
        out = np.ones_like(tau)
        for kk, cc in zip(k, c):
            out = out + cc * np.cos(kk * np.pi * tau)
        return out


@dataclass(frozen=True)
class InterpParams:
    """Fourier refinement factor and local Lagrange degree."""

    refinement: int = 4
    degree: int = 6

    def __post_init__(self) -> None:
        if self.refinement < 1:
            raise ConfigurationError("refinement must be >= 1")
        if self.degree < 1:
            raise ConfigurationError("degree must be >= 1")


def chi(s, params: CutoffParams):
    """Evaluate the cutoff at ``s`` (scalar or array)."""
    s = np.asarray(s, dtype=float)
    u = np.clip((s - params.s0) / (1.0 - params.s0), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        a = np.where(u > 0, np.exp(-1.0 / np.where(u > 0, u, 1.0)), 0.0)
        b = np.where(u < 1, np.exp(-1.0 / np.where(u < 1, 1.0 - u, 1.0)), 0.0)
    out = 1.0 - a / (a + b)
    return float(out) if out.ndim == 0 else out


def newton_cotes_weights(Q: int, h: float) -> np.ndarray:
    """Closed ``Q``-point Newton-Cotes weights for node spacing ``h``."""
    if Q not in SUPPORTED_Q:
        raise ConfigurationError(f"Q must be one of {SUPPORTED_Q}")
    return _NC_UNIT[Q] * h


def composite_newton_cotes(n: int, Q: int, h: float) -> np.ndarray:
    """Composite closed rule on ``n + 1`` nodes; ``n`` must be a multiple of ``Q - 1``."""
    if Q not in SUPPORTED_Q:
        raise ConfigurationError(f"Q must be one of {SUPPORTED_Q}")
    if n <= 0 or n % (Q - 1):
        raise ConfigurationError(f"N2={n} is not a multiple of Q-1={Q - 1}")
    w = np.zeros(n + 1)
    base = newton_cotes_weights(Q, h)
    for p in range(n // (Q - 1)):
        w[p * (Q - 1) : p * (Q - 1) + Q] += base
    return w


def midpoint_nodes(n: int) -> np.ndarray:
    """``n`` midpoint nodes on ``[-1, 1]`` (``n`` even, so 0 is never a node)."""
    if n < 2 or n % 2:
        raise ConfigurationError("number of radial nodes must be even and >= 2")
    return -1.0 + (2.0 * np.arange(n) + 1.0) / n


def fourier_refine(a: np.ndarray, R: int, axis: int = -1) -> np.ndarray:
    """Trigonometric interpolation of periodic samples onto an ``R``-times finer lattice.

    Sample ``j`` of the input sits at refined index ``j * R``.  For even
    lengths the Nyquist coefficient is split symmetrically.
    """
    if R == 1:
        return np.array(a, dtype=complex)
    a = np.moveaxis(np.asarray(a), axis, -1)
    n = a.shape[-1]
    F = np.fft.fft(a, axis=-1)
    out = np.zeros(a.shape[:-1] + (n * R,), dtype=complex)
    npos = (n + 1) // 2
    out[..., :npos] = F[..., :npos]
    nneg = (n - 1) // 2
    if nneg:
        out[..., -nneg:] = F[..., n - nneg :]
    if n % 2 == 0:
        out[..., n // 2] = 0.5 * F[..., n // 2]
        out[..., n * R - n // 2] = 0.5 * F[..., n // 2]
    res = np.fft.ifft(out, axis=-1) * R
    return np.moveaxis(res, -1, axis)


def fourier_poly_interp(samples: np.ndarray, params: InterpParams, point) -> complex:
    """Interpolate periodic lattice samples at an arbitrary point.

    Parameters
    ----------
    samples : ndarray, shape (n1, n2)
        Values at ``(i/n1, j/n2)`` of a function with period 1 in both variables.
    params : InterpParams
        Refinement factor and Lagrange degree.
    point : sequence of two floats
        Evaluation point.

    Raises
    ------
    ConfigurationError
        If the stencil does not fit on the refined lattice.
    """
    samples = np.asarray(samples)
    n1, n2 = samples.shape
    R, d = params.refinement, params.degree
    if d + 1 > min(n1, n2) * R:
        raise ConfigurationError("interpolation degree exceeds refined lattice")
    fine = fourier_refine(fourier_refine(samples, R, 0), R, 1)
    w1 = np.empty(d + 1)
    w2 = np.empty(d + 1)
    s1 = lagrange_weights(float(point[0]) * n1 * R, d, w1)
    s2 = lagrange_weights(float(point[1]) * n2 * R, d, w2)
    i1 = (s1 + np.arange(d + 1)) % (n1 * R)
    i2 = (s2 + np.arange(d + 1)) % (n2 * R)
    return complex(w1 @ fine[np.ix_(i1, i2)] @ w2)


# ---------------------------------------------------------------------------
# Interior patches: translation-invariant polar rule on the refined lattice
# ---------------------------------------------------------------------------


def _polar_nodes(r, cov: CovParams, n_tau, n_theta):
    tau = midpoint_nodes(n_tau)
    rho = r * cov.value(tau)
    wrho = r * cov.derivative(tau) * (2.0 / n_tau)
    theta = np.pi * np.arange(n_theta) / n_theta
    return rho, wrho, theta, np.pi / n_theta


def default_polar_counts(r: float, h: float) -> tuple[int, int]:
    """Node counts for the polar rule.

    The radial count is governed by the cutoff profile rather than by the
    lattice, so it has a fixed floor of 128.
    """
    n_tau = max(128, 2 * int(math.ceil(3.0 * r / h)))
    n_theta = max(24, int(math.ceil(1.5 * math.pi * r / h)))
    return n_tau, n_theta


def interior_stencil(
    kappa: float,
    A: np.ndarray,
    h: float,
    interp: InterpParams,
    cut: CutoffParams,
    cov: CovParams,
    n_tau: int,
    n_theta: int,
):
    """Weights of the polar singular rule on the refined lattice.

    For an affine patch ``x = c + A t`` and a target on the refined lattice,
    ``Sing = sum_o S[o] psi_R[target + o]`` with offsets ``o`` in
    ``[-W, W]^2``.  Returns ``(S, W)``.
    """
    R, d = interp.refinement, interp.degree
    rho, wrho, theta, wth = _polar_nodes(cut.r, cov, n_tau, n_theta)
    Rg, Tg = np.meshgrid(rho, theta, indexing="ij")
    Wg = np.broadcast_to(wrho[:, None], Rg.shape) * wth
    e1, e2 = np.cos(Tg), np.sin(Tg)
    off1 = (Rg * e1).ravel()
    off2 = (Rg * e2).ravel()
    phys = A @ np.vstack([off1, off2])
    dist = np.hypot(phys[0], phys[1])
    gvals = np.empty(dist.size, dtype=complex)
    _green_vec(kappa, dist, gvals)
    absrho = np.abs(Rg).ravel()
    vals = gvals * absrho * chi(absrho / cut.r, cut) * Wg.ravel()
    hr = h / R
    W = int(math.ceil(cut.r / hr)) + d + 1
    S = np.zeros((2 * W + 1, 2 * W + 1), dtype=complex)
    _scatter_2d(off1 / hr, off2 / hr, vals, d, W, S)
    return S, W


@nb.njit(cache=True)
def _green_vec(kappa, dist, out):
    for i in range(dist.shape[0]):
        out[i] = green_r(kappa, dist[i])


@nb.njit(cache=True)
def _scatter_2d(p1, p2, vals, d, W, S):
    w1 = np.empty(d + 1)
    w2 = np.empty(d + 1)
    for n in range(p1.shape[0]):
        s1 = lagrange_weights(p1[n], d, w1)
        s2 = lagrange_weights(p2[n], d, w2)
        for a in range(d + 1):
            va = vals[n] * w1[a]
            for b in range(d + 1):
                S[s1 + a + W, s2 + b + W] += va * w2[b]


def interior_singular_lattice(
    psi: np.ndarray, S: np.ndarray, W: int, margin: int, R: int, sample: bool = True
) -> np.ndarray:
    """Singular integrals at every point of the margin-extended coarse lattice.

    Parameters
    ----------
    psi : ndarray, shape (N+1, N+1)
        Parameter-space density on the patch lattice.
    S, W : stencil from :func:`interior_stencil`.
    margin : int
        Number of extra coarse points on every side.
    R : int
        Refinement factor used for the stencil.
    sample : bool
        Return only the coarse points (default) or the whole refined lattice.

    Returns
    -------
    ndarray, shape (N+1+2*margin, N+1+2*margin)
        Periodic extended lattice of singular values; index ``margin``
        corresponds to parameter 0.
    """
    n = psi.shape[0]
    npad = n + 2 * margin
    if W >= margin * R:
        raise ConfigurationError("lattice margin too small for the cutoff radius")
    ext = np.zeros((npad, psi.shape[1] + 2 * margin), dtype=complex)
    ext[margin : margin + n, margin : margin + psi.shape[1]] = psi
    fine = fourier_refine(fourier_refine(ext, R, 0), R, 1)
    # circular correlation with the stencil
    K = np.zeros(fine.shape, dtype=complex)
    idx1 = np.arange(-W, W + 1) % fine.shape[0]
    idx2 = np.arange(-W, W + 1) % fine.shape[1]
    K[np.ix_(idx1, idx2)] = S
    corr = np.fft.ifft2(np.fft.fft2(fine) * np.conj(np.fft.fft2(np.conj(K))))
    return corr[::R, ::R] if sample else corr


def singular_interior(
    kappa: float,
    A: np.ndarray,
    t_x,
    psi: np.ndarray,
    cut: CutoffParams,
    cov: Optional[CovParams] = None,
    interp: Optional[InterpParams] = None,
    n_tau: Optional[int] = None,
    n_theta: Optional[int] = None,
) -> complex:
    """Singular part of an interior-patch integral at an arbitrary target.

    Computes ``int chi(|t - t_x|/r) G(|A (t - t_x)|) psi(t) dt`` over the
    parameter square, with ``psi`` given on the ``(N+1)^2`` lattice and
    extended by zero.

    Raises
    ------
    ConfigurationError
        If the cutoff support is too wide for the zero extension.
    """
    cov = cov or CovParams()
    interp = interp or InterpParams()
    psi = np.asarray(psi, dtype=complex)
    N = psi.shape[0] - 1
    if cut.r >= 0.5:
        raise ConfigurationError("cutoff radius must be < 0.5 in parameter units")
    h = 1.0 / N
    dt, dth = default_polar_counts(cut.r, h)
    n_tau = n_tau or dt
    n_theta = n_theta or dth
    R, d = interp.refinement, interp.degree
    margin = int(math.ceil(cut.r * N)) + d + 2
    ext = np.zeros((N + 1 + 2 * margin,) * 2, dtype=complex)
    ext[margin : margin + N + 1, margin : margin + N + 1] = psi
    fine = fourier_refine(fourier_refine(ext, R, 0), R, 1)
    rho, wrho, theta, wth = _polar_nodes(cut.r, cov, n_tau, n_theta)
    Rg, Tg = np.meshgrid(rho, theta, indexing="ij")
    off = np.vstack([(Rg * np.cos(Tg)).ravel(), (Rg * np.sin(Tg)).ravel()])
    phys = A @ off
    dist = np.hypot(phys[0], phys[1])
    g = np.empty(dist.size, dtype=complex)
    _green_vec(kappa, dist, g)
    absrho = np.abs(Rg).ravel()
    wts = g * absrho * chi(absrho / cut.r, cut) * (np.broadcast_to(wrho[:, None], Rg.shape) * wth).ravel()
    p1 = (t_x[0] + off[0]) * N * R + margin * R
    p2 = (t_x[1] + off[1]) * N * R + margin * R
    return complex(_interp_sum_2d(fine, p1, p2, wts, d))


@nb.njit(cache=True)
def _interp_sum_2d(fine, p1, p2, wts, d):
    n1, n2 = fine.shape
    w1 = np.empty(d + 1)
    w2 = np.empty(d + 1)
    acc = 0j
    for n in range(p1.shape[0]):
        s1 = lagrange_weights(p1[n], d, w1)
        s2 = lagrange_weights(p2[n], d, w2)
        v = 0j
        for a in range(d + 1):
            ia = (s1 + a) % n1
            for b in range(d + 1):
                v += w1[a] * w2[b] * fine[ia, (s2 + b) % n2]
        acc += wts[n] * v
    return acc


# ---------------------------------------------------------------------------
# Boundary patches: graded inner integral, target-anchored panels in t2
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BoundaryRule:
    """Parameters of the boundary singular rule.

    Attributes
    ----------
    Q : int
        Newton-Cotes order in ``t2``.
    r1, r2 : float
        Half-widths of the rectangular cutoff in ``t1`` and ``t2``.
    s0 : float
        Relative plateau of the cutoff.
    cov : CovParams
        Graded inner variable.
    interp : InterpParams
        Refinement in ``t1`` and Lagrange degree in ``t1``.
    degree_t2 : int
        Lagrange degree for densities on auxiliary ``t2`` lines.
    n_tau : int
        Number of midpoint nodes for the inner variable.
    """

    Q: int
    r1: float
    r2: float
    s0: float
    cov: CovParams
    interp: InterpParams
    degree_t2: int
    n_tau: int


@nb.njit(cache=True)
def _grow(arr, need):
    if need <= arr.shape[0]:
        return arr
    cap = arr.shape[0]
    while cap < need:
        cap *= 2
    out = np.empty(cap, dtype=arr.dtype)
    out[: arr.shape[0]] = arr
    return out


@nb.njit(cache=True)
def _panel_lines(t2x, h2, Q, ncw, r2, lt, lw):
    """Fill node positions and weights of the ``t2`` panels; returns the count.

    The lattice panel holding the target is split at the target into two
    scaled panels; every other panel is a lattice panel, so away from the
    target the rule coincides with the lattice weights.
    """
    n = 0
    span = (Q - 1) * h2
    npan = int(round(1.0 / span))
    tol = 1e-9 * h2
    pos = t2x / span
    k = int(math.floor(pos + 1e-9))
    on_edge = abs(pos - round(pos)) * span < tol
    if on_edge:
        k = int(round(pos))
        lo_edge = k
        hi_edge = k
    else:
        lo_edge = k
        hi_edge = k + 1
    if not on_edge:
        for side in range(2):
            a0 = lo_edge * span if side == 0 else t2x
            ln = (t2x - lo_edge * span) if side == 0 else (hi_edge * span - t2x)
            if ln <= tol:
                continue
            dl = ln / (Q - 1)
            for a in range(Q):
                lt[n] = a0 + a * dl
                lw[n] = dl * ncw[a]
                n += 1
    # lattice panels above and below
    p = hi_edge
    while p < npan and p * span < t2x + r2:
        for a in range(Q):
            lt[n] = (p * (Q - 1) + a) * h2
            lw[n] = h2 * ncw[a]
            n += 1
        p += 1
    p = lo_edge - 1
    while p >= 0 and (p + 1) * span > t2x - r2:
        for a in range(Q):
            lt[n] = (p * (Q - 1) + a) * h2
            lw[n] = h2 * ncw[a]
            n += 1
        p -= 1
    return n


@nb.njit(cache=True)
def _boundary_rows_kernel(
    t1x, t2x, kappa, scale, ca, sa, theta0, extent, depth,
    N1, N2, R, d, d2, Q, ncw, r1, r2, s0, ptau, wtau,
):
    nrow = t1x.shape[0]
    ncol1 = N1 * R + 1
    ncols = (N2 + 1) * ncol1
    h1 = 1.0 / N1
    h2 = 1.0 / N2
    acc = np.zeros(ncols, dtype=np.complex128)
    mark = np.zeros(ncols, dtype=np.bool_)
    touched = np.empty(ncols, dtype=np.int64)
    maxlines = 4 * (N2 + 2 * Q) + 4 * Q + 8
    lt = np.empty(maxlines)
    lw = np.empty(maxlines)
    w1 = np.empty(d + 1)
    w2 = np.empty(d2 + 1)
    indptr = np.zeros(nrow + 1, dtype=np.int64)
    indices = np.empty(1024, dtype=np.int32)
    data = np.empty(1024, dtype=np.complex128)
    nnz = 0
    ntau = ptau.shape[0]
    chi1 = np.empty(ntau)
    for k in range(ntau):
        chi1[k] = cutoff(abs(ptau[k]), s0)
    for row in range(nrow):
        xx, xy = boundary_point(t1x[row], t2x[row], scale, ca, sa, theta0, extent, depth)
        nl = _panel_lines(t2x[row], h2, Q, ncw, r2, lt, lw)
        nt = 0
        for li in range(nl):
            t2 = lt[li]
            c2 = cutoff(abs(t2 - t2x[row]) / r2, s0)
            if c2 == 0.0:
                continue
            pos = t2 / h2
            if pos > N2 + 1e-9 or pos < -1e-9:
                continue
            jr = int(math.floor(pos + 0.5))
            aligned = abs(pos - jr) < 1e-9
            if aligned:
                s2 = jr
                nb2 = 1
                w2[0] = 1.0
            else:
                s2 = lagrange_weights_clamped(pos, d2, 0, N2, w2)
                nb2 = d2 + 1
            wline = lw[li] * c2
            for k in range(ntau):
                if chi1[k] == 0.0:
                    continue
                t1 = t1x[row] + r1 * ptau[k]
                yx, yy = boundary_point(t1, t2, scale, ca, sa, theta0, extent, depth)
                dist = math.sqrt((xx - yx) ** 2 + (xy - yy) ** 2)
                val = wline * wtau[k] * r1 * chi1[k] * green_r(kappa, dist)
                s1 = lagrange_weights(t1 * N1 * R, d, w1)
                for a in range(d + 1):
                    c = s1 + a
                    if c < 0 or c >= ncol1:
                        continue
                    va = val * w1[a]
                    for b in range(nb2):
                        idx = (s2 + b) * ncol1 + c
                        if not mark[idx]:
                            mark[idx] = True
                            touched[nt] = idx
                            nt += 1
                        acc[idx] += va * w2[b]
        indices = _grow(indices, nnz + nt)
        data = _grow(data, nnz + nt)
        for q in range(nt):
            idx = touched[q]
            indices[nnz] = idx
            data[nnz] = acc[idx]
            nnz += 1
            acc[idx] = 0.0
            mark[idx] = False
        indptr[row + 1] = nnz
    return indptr, indices[:nnz].copy(), data[:nnz].copy()


def boundary_singular_rows(patch, kappa: float, rule: BoundaryRule, t1x, t2x) -> sparse.csr_matrix:
    """Sparse rows of the boundary singular rule for a list of targets.

    Row ``i`` maps the density refined along ``t1`` (array of shape
    ``(N2+1, N1*R+1)``, flattened row-major) to the singular integral at the
    parameter point ``(t1x[i], t2x[i])``.  ``t1x`` may lie outside ``[0, 1]``;
    the patch map is simply continued there.
    """
    t1x = np.ascontiguousarray(t1x, dtype=float)
    t2x = np.ascontiguousarray(t2x, dtype=float)
    if np.any(t2x < -1e-12) or np.any(t2x > 1 + 1e-12):
        raise ValueError("t2 of a boundary target must lie in [0, 1]")
    if patch.N2 % (rule.Q - 1):
        raise ConfigurationError("N2 incompatible with the Newton-Cotes panels")
    tau = midpoint_nodes(rule.n_tau)
    ptau = rule.cov.value(tau)
    wtau = rule.cov.derivative(tau) * (2.0 / rule.n_tau)
    R, d = rule.interp.refinement, rule.interp.degree
    indptr, indices, data = _boundary_rows_kernel(
        t1x, np.clip(t2x, 0.0, 1.0), float(kappa), patch.scale, patch.ca, patch.sa,
        patch.theta0, patch.extent, patch.depth, patch.N1, patch.N2, R, d,
        min(rule.degree_t2, patch.N2), rule.Q, _NC_UNIT[rule.Q], rule.r1, rule.r2, rule.s0, ptau, wtau,
    )
    ncols = (patch.N2 + 1) * (patch.N1 * R + 1)
    return sparse.csr_matrix((data, indices, indptr), shape=(t1x.size, ncols))


def refine_boundary_density(psi: np.ndarray, R: int, pad: int = 8) -> np.ndarray:
    """Refine a boundary-patch density along ``t1`` (axis 1) by zero-padded FFT."""
    n2, n1 = psi.shape
    ext = np.zeros((n2, n1 + pad), dtype=complex)
    ext[:, :n1] = psi
    fine = fourier_refine(ext, R, 1)
    return fine[:, : (n1 - 1) * R + 1]


def singular_boundary(patch, kappa: float, t_x, psi: np.ndarray, rule: BoundaryRule) -> complex:
    """Singular part of a boundary-patch integral at one target.

    ``psi`` holds the parameter-space density on the ``(N2+1, N1+1)`` lattice
    (axis 0 is ``t2``).

    Raises
    ------
    ValueError
        If ``t_x[1]`` is outside ``[0, 1]``.
    """
    if not (-1e-12 <= t_x[1] <= 1 + 1e-12):
        raise ValueError("t2 of a boundary target must lie in [0, 1]")
    rows = boundary_singular_rows(patch, kappa, rule, [t_x[0]], [t_x[1]])
    fine = refine_boundary_density(np.asarray(psi, dtype=complex), rule.interp.refinement)
    return complex((rows @ fine.ravel())[0])


def regular_patch_sum(kappa: float, points: np.ndarray, weights: np.ndarray, density, target, eta=None) -> complex:
    """Weighted lattice sum ``sum_l (1 - eta_l) G(x, y_l) w_l phi_l``.

    Parameters
    ----------
    points : ndarray, shape (n, 2)
        Physical lattice points of the patch.
    weights : ndarray, shape (n,)
        Regular quadrature weights (already containing Jacobian and POU).
    density : ndarray, shape (n,)
        Values of ``m u`` at the points.
    target : sequence of two floats
    eta : ndarray, optional
        Cutoff values at the points; omitted means 0.

    Raises
    ------
    KernelSingularityError
        If the target coincides with a lattice point carrying weight.
    """
    from .kernel import KernelParams, green

    points = np.asarray(points, dtype=float)
    coef = np.asarray(weights) * np.asarray(density)
    if eta is not None:
        coef = coef * (1.0 - np.asarray(eta))
    keep = coef != 0
    if not np.any(keep):
        return 0j
    g = green(KernelParams(kappa), np.asarray(target, dtype=float)[None, :], points[keep])
    return complex(np.sum(g * coef[keep]))
