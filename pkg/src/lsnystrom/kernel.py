"""Radiating fundamental solution of the 2D Helmholtz equation.

``G(x, y) = (i/4) H0(kappa |x - y|)`` and its derivative with respect to the
source point ``y`` along a unit direction ``nu``::

    dG/dnu_y = (i/4) kappa H1(kappa r) ((x - y) . nu) / r,   r = |x - y|.

The sign follows from ``d r / d y = -(x - y)/r`` and ``H0' = -H1``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba as nb
import numpy as np

from .special_functions import jy01

__all__ = ["KernelParams", "KernelSingularityError", "green", "green_dnu", "green_r", "green_dnu_r"]


class KernelSingularityError(ValueError):
    """Raised when the kernel is requested at coincident points."""


@dataclass(frozen=True)
class KernelParams:
    """Wavenumber of the Helmholtz kernel.

    Parameters
    ----------
    kappa : float
        Positive wavenumber.
    """

    kappa: float

    def __post_init__(self) -> None:
        if not (np.isfinite(self.kappa) and self.kappa > 0):
            raise ValueError("kappa must be positive and finite")


@nb.njit(cache=True)
def green_r(kappa: float, r: float) -> complex:
    """``G`` as a function of the distance ``r > 0``."""
    j0, _, y0, _ = jy01(kappa * r)
    return complex(-0.25 * y0, 0.25 * j0)


@nb.njit(cache=True)
def green_dnu_r(kappa: float, dx: float, dy: float, nx: float, ny: float) -> complex:
    """``dG/dnu_y`` for ``x - y = (dx, dy)`` and direction ``(nx, ny)``."""
    r = np.sqrt(dx * dx + dy * dy)
    _, j1, _, y1 = jy01(kappa * r)
    c = 0.25 * kappa * (dx * nx + dy * ny) / r
    return complex(-c * y1, c * j1)


@nb.njit(cache=True)
def _green_many(kappa, dx, dy, out):
    for i in range(dx.shape[0]):
        out[i] = green_r(kappa, np.sqrt(dx[i] * dx[i] + dy[i] * dy[i]))


@nb.njit(cache=True)
def _green_dnu_many(kappa, dx, dy, nx, ny, out):
    for i in range(dx.shape[0]):
        out[i] = green_dnu_r(kappa, dx[i], dy[i], nx[i], ny[i])


def _differences(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d = x - y
    if d.shape[-1] != 2:
        raise ValueError("points must have a trailing dimension of size 2")
    if np.any(np.hypot(d[..., 0], d[..., 1]) == 0.0):
        raise KernelSingularityError("kernel evaluated at coincident points")
    return d


def green(params: KernelParams, x, y):
    """Evaluate ``G(x, y)``; ``x`` and ``y`` broadcast over leading axes.

    Raises
    ------
    KernelSingularityError
        If any pair of points coincides.
    """
    d = _differences(x, y)
    flat = d.reshape(-1, 2)
    out = np.empty(flat.shape[0], dtype=complex)
    _green_many(float(params.kappa), np.ascontiguousarray(flat[:, 0]), np.ascontiguousarray(flat[:, 1]), out)
    out = out.reshape(d.shape[:-1])
    return complex(out) if out.ndim == 0 else out


def green_dnu(params: KernelParams, x, y, nu):
    """Evaluate the derivative of ``G(x, y)`` with respect to ``y`` along ``nu``.

    Raises
    ------
    KernelSingularityError
        If any pair of points coincides.
    ValueError
        If ``nu`` is not a unit vector.
    """
    d = _differences(x, y)
    nu = np.asarray(nu, dtype=float)
    if np.any(np.abs(np.hypot(nu[..., 0], nu[..., 1]) - 1.0) > 1e-12):
        raise ValueError("nu must have unit length")
    d, nu = np.broadcast_arrays(d, nu)
    flat = d.reshape(-1, 2)
    nflat = nu.reshape(-1, 2)
    out = np.empty(flat.shape[0], dtype=complex)
    _green_dnu_many(
        float(params.kappa),
        np.ascontiguousarray(flat[:, 0]),
        np.ascontiguousarray(flat[:, 1]),
        np.ascontiguousarray(nflat[:, 0]),
        np.ascontiguousarray(nflat[:, 1]),
        out,
    )
    out = out.reshape(d.shape[:-1])
    return complex(out) if out.ndim == 0 else out
