"""Compiled helpers shared by the geometry and quadrature modules.

Star-shaped curves are ``r(theta) = R (1 + sum_k a_k cos k theta + b_k sin k theta)``.
A boundary patch maps ``(t1, t2)`` in the unit square to
``s r(theta) (cos theta, sin theta)`` with ``theta = theta0 - E/2 + E t1`` and
``s = 1 - f t2``, so ``t2 = 0`` lies exactly on the curve.
"""

from __future__ import annotations

import math

import numba as nb
import numpy as np


@nb.njit(cache=True)
def smooth_step(u: float) -> float:
    """C-infinity step: 0 for ``u <= 0``, 1 for ``u >= 1``."""
    if u <= 0.0:
        return 0.0
    if u >= 1.0:
        return 1.0
    a = math.exp(-1.0 / u)
    b = math.exp(-1.0 / (1.0 - u))
    return a / (a + b)


@nb.njit(cache=True)
def cutoff(s: float, s0: float) -> float:
    """Radial cutoff: 1 on ``[0, s0]``, 0 on ``[1, inf)``."""
    return 1.0 - smooth_step((s - s0) / (1.0 - s0))


@nb.njit(cache=True)
def star_radius(theta: float, scale: float, ca: np.ndarray, sa: np.ndarray) -> float:
    acc = 1.0
    for k in range(ca.shape[0]):
        acc += ca[k] * math.cos((k + 1) * theta) + sa[k] * math.sin((k + 1) * theta)
    return scale * acc


@nb.njit(cache=True)
def boundary_point(t1, t2, scale, ca, sa, theta0, extent, depth):
    theta = theta0 - 0.5 * extent + extent * t1
    rr = (1.0 - depth * t2) * star_radius(theta, scale, ca, sa)
    return rr * math.cos(theta), rr * math.sin(theta)


@nb.njit(cache=True)
def lagrange_weights(p: float, deg: int, out: np.ndarray) -> int:
    """Centred Lagrange weights at fractional index ``p``; returns the first node."""
    start = int(math.floor(p - 0.5 * deg + 0.5))
    for a in range(deg + 1):
        w = 1.0
        xa = start + a
        for b in range(deg + 1):
            if b != a:
                w *= (p - (start + b)) / (xa - (start + b))
        out[a] = w
    return start


@nb.njit(cache=True)
def lagrange_weights_clamped(p: float, deg: int, lo: int, hi: int, out: np.ndarray) -> int:
    """Lagrange weights with the stencil shifted to stay inside ``[lo, hi]``."""
    start = int(math.floor(p - 0.5 * deg + 0.5))
    if start < lo:
        start = lo
    if start + deg > hi:
        start = hi - deg
    for a in range(deg + 1):
        w = 1.0
        xa = start + a
        for b in range(deg + 1):
            if b != a:
                w *= (p - (start + b)) / (xa - (start + b))
        out[a] = w
    return start
