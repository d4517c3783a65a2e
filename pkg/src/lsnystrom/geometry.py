"""Scatterer geometry: star-shaped curves, overlapping patches, partition of unity.

A scatterer ``Omega`` is described by a star-shaped boundary
``r(theta) = R (1 + sum_k a_k cos k theta + b_k sin k theta)``.  It is covered
by

* two boundary patches, each an angular sector of the annulus
  ``1 - f <= s <= 1`` (``s`` the radial fraction) with ``t2 = 0`` on the
  boundary curve, and
* one interior patch, an axis-aligned rectangle strictly inside ``Omega``.

Raw weights are tensor products of one-dimensional C-infinity bumps in
parameter space; the partition of unity is obtained by dividing by their sum.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .quadrature import ConfigurationError, composite_newton_cotes

logger = logging.getLogger(__name__)

__all__ = [
    "StarCurve",
    "disc_curve",
    "bean_curve",
    "RefractiveProfile",
    "ProblemConfig",
    "BoundaryPatch",
    "InteriorPatch",
    "PatchSet",
    "NystromGrid",
    "build_disc_patchset",
    "build_bean_patchset",
    "build_star_patchset",
    "pou_weight",
    "build_grid",
    "GeometryDomainError",
]


class GeometryDomainError(ValueError):
    """A point lies outside every patch."""


def _step(u):
    u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        a = np.where(u > 0, np.exp(-1.0 / np.where(u > 0, u, 1.0)), 0.0)
        b = np.where(u < 1, np.exp(-1.0 / np.where(u < 1, 1.0 - u, 1.0)), 0.0)
    return a / (a + b)


def _bump(t, width):
    """C-infinity bump on (0, 1), equal to 1 on ``[width, 1 - width]``."""
    return _step(t / width) * _step((1.0 - t) / width)


@dataclass(frozen=True)
class StarCurve:
    """Star-shaped closed curve ``r(theta) = scale (1 + sum a_k cos k theta + b_k sin k theta)``."""

    scale: float = 1.0
    cos_coeffs: tuple = ()
    sin_coeffs: tuple = ()

    def __post_init__(self) -> None:
        if self.scale <= 0:
            raise ConfigurationError("curve scale must be positive")
        th = np.linspace(0, 2 * np.pi, 2049)
        if np.min(self.radius(th)) <= 0:
            raise ConfigurationError("curve radius must stay positive")

    @property
    def ca(self) -> np.ndarray:
        n = max(len(self.cos_coeffs), len(self.sin_coeffs))
        out = np.zeros(n)
        out[: len(self.cos_coeffs)] = self.cos_coeffs
        return out

    @property
    def sa(self) -> np.ndarray:
        n = max(len(self.cos_coeffs), len(self.sin_coeffs))
        out = np.zeros(n)
        out[: len(self.sin_coeffs)] = self.sin_coeffs
        return out

    def radius(self, theta):
        theta = np.asarray(theta, dtype=float)
        acc = np.ones_like(theta)
        for k, (a, b) in enumerate(zip(self.ca, self.sa), start=1):
            acc = acc + a * np.cos(k * theta) + b * np.sin(k * theta)
        return self.scale * acc

    def point(self, theta):
        r = self.radius(theta)
        return np.stack([r * np.cos(theta), r * np.sin(theta)], axis=-1)

    def contains(self, x) -> np.ndarray:
        """Closed-domain membership test."""
        x = np.asarray(x, dtype=float)
        th = np.arctan2(x[..., 1], x[..., 0])
        return np.hypot(x[..., 0], x[..., 1]) <= self.radius(th) * (1 + 1e-12)

    @property
    def is_circle(self) -> bool:
        return not np.any(self.ca) and not np.any(self.sa)


def disc_curve(radius: float = 1.0) -> StarCurve:
    """Circle of the given radius."""
    return StarCurve(scale=radius)


def bean_curve(scale: float = 1.0) -> StarCurve:
    """Bean-shaped curve ``r = scale (1 + 0.2 cos 2 theta - 0.2 sin theta)``.

    Concave near ``theta = pi/2`` and convex elsewhere.
    """
    return StarCurve(scale=scale, cos_coeffs=(0.0, 0.2), sin_coeffs=(-0.2,))


@dataclass(frozen=True)
class RefractiveProfile:
    """Refractive index ``n(x)``.

    Parameters
    ----------
    kind : {"constant", "separable_trig", "user_table"}
        ``constant`` uses ``value``; ``separable_trig`` is
        ``sin(pi x1) cos(pi x2)``; ``user_table`` interpolates ``table``.
    value : float
        Constant index.
    table : tuple, optional
        ``(x1_nodes, x2_nodes, values)`` for tensor-grid cubic interpolation.
    """

    kind: str = "constant"
    value: float = 1.0
    table: Optional[tuple] = None

    def __post_init__(self) -> None:
        if self.kind not in ("constant", "separable_trig", "user_table"):
            raise ConfigurationError(f"unknown refractive profile {self.kind!r}")
        if self.kind == "user_table" and self.table is None:
            raise ConfigurationError("user_table profile needs a table")

    def index(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "constant":
            return np.full(x.shape[:-1], float(self.value))
        if self.kind == "separable_trig":
            return np.sin(np.pi * x[..., 0]) * np.cos(np.pi * x[..., 1])
        from scipy.interpolate import RegularGridInterpolator

        g1, g2, vals = self.table
        interp = RegularGridInterpolator((np.asarray(g1), np.asarray(g2)), np.asarray(vals), method="cubic")
        return interp(x.reshape(-1, 2)).reshape(x.shape[:-1])

    def contrast(self, x) -> np.ndarray:
        """``m = 1 - n^2`` evaluated pointwise."""
        n = self.index(x)
        return 1.0 - n * n


@dataclass(frozen=True)
class ProblemConfig:
    """Physical problem: wavenumber, scatterer, refractive index, incidence."""

    kappa: float
    curve: StarCurve = field(default_factory=disc_curve)
    shape: str = "disc"
    profile: RefractiveProfile = field(default_factory=RefractiveProfile)
    direction: tuple = (1.0, 0.0)

    def __post_init__(self) -> None:
        if not (np.isfinite(self.kappa) and self.kappa > 0):
            raise ConfigurationError("kappa must be positive")
        if abs(math.hypot(*self.direction) - 1.0) > 1e-12:
            raise ConfigurationError("incidence direction must be a unit vector")
        if self.shape not in ("disc", "bean", "star"):
            raise ConfigurationError(f"unknown shape {self.shape!r}")


@dataclass(frozen=True)
class BoundaryPatch:
    """Sector of the boundary annulus.

    ``x(t1, t2) = (1 - depth t2) r(theta) (cos theta, sin theta)`` with
    ``theta = theta0 - extent/2 + extent t1``.
    """

    id: int
    N1: int
    N2: int
    curve: StarCurve
    theta0: float
    extent: float
    depth: float
    edge_width: float = 0.25
    plateau: float = 0.4
    kind: str = "boundary"

    @property
    def scale(self) -> float:
        return float(self.curve.scale)

    @property
    def ca(self) -> np.ndarray:
        return np.ascontiguousarray(self.curve.ca, dtype=float)

    @property
    def sa(self) -> np.ndarray:
        return np.ascontiguousarray(self.curve.sa, dtype=float)

    @property
    def shape(self) -> tuple:
        """Lattice shape ``(N2 + 1, N1 + 1)``; axis 0 runs along ``t2``."""
        return (self.N2 + 1, self.N1 + 1)

    def lattice_params(self):
        t1 = np.arange(self.N1 + 1) / self.N1
        t2 = np.arange(self.N2 + 1) / self.N2
        T2, T1 = np.meshgrid(t2, t1, indexing="ij")
        return T1.ravel(), T2.ravel()

    def theta(self, t1):
        return self.theta0 - 0.5 * self.extent + self.extent * np.asarray(t1, dtype=float)

    def map(self, t1, t2):
        th = self.theta(t1)
        rr = (1.0 - self.depth * np.asarray(t2, dtype=float)) * self.curve.radius(th)
        return np.stack([rr * np.cos(th), rr * np.sin(th)], axis=-1)

    def jacobian(self, t1, t2):
        th = self.theta(t1)
        s = 1.0 - self.depth * np.asarray(t2, dtype=float)
        r = self.curve.radius(th)
        return self.extent * self.depth * s * r * r

    def inverse(self, x):
        """Closed-form inverse; points outside the patch get parameters outside ``[0, 1]``."""
        x = np.asarray(x, dtype=float)
        th = np.arctan2(x[..., 1], x[..., 0])
        start = self.theta0 - 0.5 * self.extent
        off = np.mod(th - start, 2 * np.pi)
        # put the gap symmetrically so that points just before the start map to t1 < 0
        off = np.where(off > 0.5 * (2 * np.pi + self.extent), off - 2 * np.pi, off)
        t1 = off / self.extent
        s = np.hypot(x[..., 0], x[..., 1]) / self.curve.radius(th)
        t2 = (1.0 - s) / self.depth
        return t1, t2

    def raw_weight(self, t1, t2):
        t1 = np.asarray(t1, dtype=float)
        t2 = np.asarray(t2, dtype=float)
        inside = (t1 >= 0) & (t1 <= 1) & (t2 >= -1e-12) & (t2 <= 1)
        depth_profile = 1.0 - _step((t2 - self.plateau) / (1.0 - self.plateau))
        return np.where(inside, _bump(t1, self.edge_width) * depth_profile, 0.0)


@dataclass(frozen=True)
class InteriorPatch:
    """Axis-aligned rectangle ``[lo, hi]`` mapped affinely from the unit square."""

    id: int
    N: int
    lo: tuple
    hi: tuple
    edge_width: float = 0.2
    kind: str = "interior"

    @property
    def N1(self) -> int:
        return self.N

    @property
    def N2(self) -> int:
        return self.N

    @property
    def shape(self) -> tuple:
        """Lattice shape ``(N + 1, N + 1)``; axis 0 runs along ``t1``."""
        return (self.N + 1, self.N + 1)

    @property
    def A(self) -> np.ndarray:
        return np.diag([self.hi[0] - self.lo[0], self.hi[1] - self.lo[1]])

    def lattice_params(self):
        t = np.arange(self.N + 1) / self.N
        T1, T2 = np.meshgrid(t, t, indexing="ij")
        return T1.ravel(), T2.ravel()

    def map(self, t1, t2):
        t1 = np.asarray(t1, dtype=float)
        t2 = np.asarray(t2, dtype=float)
        return np.stack(
            [self.lo[0] + (self.hi[0] - self.lo[0]) * t1, self.lo[1] + (self.hi[1] - self.lo[1]) * t2], axis=-1
        )

    def jacobian(self, t1, t2):
        return np.full(np.broadcast(np.asarray(t1), np.asarray(t2)).shape, float(np.linalg.det(self.A)))

    def inverse(self, x):
        x = np.asarray(x, dtype=float)
        return (
            (x[..., 0] - self.lo[0]) / (self.hi[0] - self.lo[0]),
            (x[..., 1] - self.lo[1]) / (self.hi[1] - self.lo[1]),
        )

    def raw_weight(self, t1, t2):
        t1 = np.asarray(t1, dtype=float)
        t2 = np.asarray(t2, dtype=float)
        return _bump(t1, self.edge_width) * _bump(t2, self.edge_width)


@dataclass(frozen=True)
class PatchSet:
    """Patches covering ``Omega`` with the boundary patches listed first."""

    patches: tuple
    curve: StarCurve

    @property
    def boundary_ids(self) -> list:
        return [p.id for p in self.patches if p.kind == "boundary"]

    @property
    def interior_ids(self) -> list:
        return [p.id for p in self.patches if p.kind == "interior"]

    def raw_weights(self, x) -> np.ndarray:
        """Raw bump values of every patch at ``x``; shape ``(K,) + x.shape[:-1]``."""
        x = np.asarray(x, dtype=float)
        out = []
        for p in self.patches:
            t1, t2 = p.inverse(x)
            out.append(p.raw_weight(t1, t2))
        return np.array(out)

    def weights(self, x) -> np.ndarray:
        """Partition-of-unity values of every patch at ``x``.

        Raises
        ------
        GeometryDomainError
            If some point is covered by no patch.
        """
        b = self.raw_weights(x)
        tot = b.sum(axis=0)
        if np.any(tot <= 0):
            raise GeometryDomainError("point outside every patch")
        return b / tot

    def bounds(self) -> tuple:
        th = np.linspace(0, 2 * np.pi, 4097)
        pts = self.curve.point(th)
        return pts.min(axis=0), pts.max(axis=0)


def pou_weight(pset: PatchSet, k: int, x) -> np.ndarray:
    """Partition-of-unity weight of patch ``k`` at ``x``.

    Raises
    ------
    GeometryDomainError
        If ``x`` is covered by no patch.
    """
    w = pset.weights(x)[k]
    return float(w) if np.ndim(w) == 0 else w


def _check_res(values) -> None:
    for v in values:
        if int(v) < 2:
            raise ConfigurationError("each patch needs at least 3 points per direction")


def build_star_patchset(
    curve: StarCurve,
    resolutions: Sequence[int],
    rect: tuple,
    depth: float = 0.6,
    extent: float = 4.0 * np.pi / 3.0,
    interior_edge: float = 0.2,
) -> PatchSet:
    """Two boundary sectors centred at angles 0 and pi plus one interior rectangle.

    Parameters
    ----------
    curve : StarCurve
    resolutions : (N1, N2, N)
        Boundary intervals along the curve and across the layer, interior
        intervals per direction.
    rect : ((x_lo, y_lo), (x_hi, y_hi))
        Interior rectangle; must lie inside ``Omega``.
    depth : float
        Relative thickness of the boundary layer.
    extent : float
        Angular extent of each boundary sector (``> pi`` for overlap).
    """
    N1, N2, N = (int(v) for v in resolutions)
    _check_res((N1, N2, N))
    if not (np.pi < extent < 2 * np.pi):
        raise ConfigurationError("sector extent must lie in (pi, 2 pi)")
    lo, hi = rect
    u = np.linspace(0.0, 1.0, 257)
    edges = np.concatenate(
        [
            np.stack([lo[0] + (hi[0] - lo[0]) * u, np.full_like(u, lo[1])], -1),
            np.stack([lo[0] + (hi[0] - lo[0]) * u, np.full_like(u, hi[1])], -1),
            np.stack([np.full_like(u, lo[0]), lo[1] + (hi[1] - lo[1]) * u], -1),
            np.stack([np.full_like(u, hi[0]), lo[1] + (hi[1] - lo[1]) * u], -1),
        ]
    )
    if not np.all(curve.contains(edges)):
        raise ConfigurationError("interior rectangle leaves the scatterer")
    patches = (
        BoundaryPatch(0, N1, N2, curve, 0.0, extent, depth),
        BoundaryPatch(1, N1, N2, curve, np.pi, extent, depth),
        InteriorPatch(2, N, tuple(lo), tuple(hi), edge_width=interior_edge),
    )
    return PatchSet(patches, curve)


def build_disc_patchset(radius: float, resolutions: Sequence[int], depth: float = 0.6) -> PatchSet:
    """Patch set for a disc of the given radius.

    Raises
    ------
    ConfigurationError
        If a resolution has fewer than 3 points per direction.
    """
    if radius <= 0:
        raise ConfigurationError("radius must be positive")
    half = 0.7 * radius
    return build_star_patchset(disc_curve(radius), resolutions, ((-half, -half), (half, half)), depth=depth)


def build_bean_patchset(
    curve: Optional[StarCurve] = None, resolutions: Sequence[int] = (16, 8, 16), depth: float = 0.6
) -> PatchSet:
    """Patch set for the bean curve (scaled rectangle tuned to its shape)."""
    curve = curve or bean_curve()
    s = curve.scale
    rect = ((-0.8 * s, -0.65 * s), (0.8 * s, 0.45 * s))
    return build_star_patchset(curve, resolutions, rect, depth=depth)


@dataclass
class NystromGrid:
    """All discretisation points with their quadrature data.

    Points are stored patch by patch; ``offsets[k]:offsets[k+1]`` is the
    flattened lattice of patch ``k`` in the order given by its ``shape``.
    """

    patchset: PatchSet
    config: ProblemConfig
    Q: int
    points: np.ndarray
    patch_id: np.ndarray
    t1: np.ndarray
    t2: np.ndarray
    jacobian: np.ndarray
    omega: np.ndarray
    contrast: np.ndarray
    weights: np.ndarray
    offsets: np.ndarray

    @property
    def size(self) -> int:
        return self.points.shape[0]

    def patch_slice(self, k: int) -> slice:
        return slice(int(self.offsets[k]), int(self.offsets[k + 1]))

    def label(self) -> str:
        b = [p for p in self.patchset.patches if p.kind == "boundary"]
        i = [p for p in self.patchset.patches if p.kind == "interior"]
        return (
            f"{len(b)}x{b[0].N2 + 1}x{b[0].N1 + 1}+{len(i)}x{i[0].N + 1}x{i[0].N + 1}"
        )


def build_grid(pset: PatchSet, config: ProblemConfig, Q: int = 5) -> NystromGrid:
    """Assemble the Nystrom grid with regular weights.

    Raises
    ------
    ConfigurationError
        If a boundary patch has ``N2`` not divisible by ``Q - 1``.
    """
    pts, pid, T1s, T2s, Js, Ws, offs = [], [], [], [], [], [], [0]
    for p in pset.patches:
        t1, t2 = p.lattice_params()
        x = p.map(t1, t2)
        J = p.jacobian(t1, t2)
        if p.kind == "boundary":
            nc = composite_newton_cotes(p.N2, Q, 1.0 / p.N2)
            base = (1.0 / p.N1) * np.repeat(nc, p.N1 + 1)
        else:
            base = np.full(t1.shape, 1.0 / p.N**2)
        pts.append(x)
        pid.append(np.full(t1.shape, p.id))
        T1s.append(t1)
        T2s.append(t2)
        Js.append(J)
        Ws.append(base)
        offs.append(offs[-1] + t1.size)
    points = np.concatenate(pts)
    patch_id = np.concatenate(pid)
    raw = np.array([p.raw_weight(*p.inverse(points)) for p in pset.patches])
    # own-patch raw weights are evaluated on exact parameters to avoid round-off
    for k, p in enumerate(pset.patches):
        sl = slice(offs[k], offs[k + 1])
        raw[k, sl] = p.raw_weight(T1s[k], T2s[k])
    tot = raw.sum(axis=0)
    omega = np.zeros(points.shape[0])
    for k in range(len(pset.patches)):
        sl = slice(offs[k], offs[k + 1])
        omega[sl] = np.where(tot[sl] > 0, raw[k, sl] / np.where(tot[sl] > 0, tot[sl], 1.0), 0.0)
    jac = np.concatenate(Js)
    weights = np.concatenate(Ws) * jac * omega
    contrast = config.profile.contrast(points)
    grid = NystromGrid(
        patchset=pset,
        config=config,
        Q=Q,
        points=points,
        patch_id=patch_id,
        t1=np.concatenate(T1s),
        t2=np.concatenate(T2s),
        jacobian=jac,
        omega=omega,
        contrast=contrast,
        weights=weights,
        offsets=np.array(offs),
    )
    logger.info("grid %s with %d points", grid.label(), grid.size)
    return grid
