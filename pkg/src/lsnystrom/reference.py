"""Reference solutions and error metrics.

The disc of radius ``a`` with constant index ``n`` has a separable solution.
With ``c_l = i^|l| exp(-i l alpha)`` the coefficients of the interior field
``sum a_l J_|l|(n kappa r) e^{i l theta}`` and the scattered field
``sum b_l H_|l|(kappa r) e^{i l theta}`` follow from continuity of ``u`` and
``du/dr`` at ``r = a``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

logger = logging.getLogger(__name__)

__all__ = ["MieSolution", "mie_coefficients", "mie_total_field", "relative_errors", "convergence_orders"]


@dataclass(frozen=True)
class MieSolution:
    """Coefficients of the disc solution for orders ``-L..L``."""

    kappa: float
    radius: float
    index: float
    alpha: float
    orders: np.ndarray
    interior: np.ndarray
    scattered: np.ndarray


def mie_coefficients(kappa: float, radius: float, index: float, alpha: float = 0.0, lmax: int | None = None):
    """Solve the ``2 x 2`` matching systems for every order.

    Raises
    ------
    ValueError
        For non-positive ``kappa``, ``radius`` or ``index``.
    """
    if kappa <= 0 or radius <= 0 or index <= 0:
        raise ValueError("kappa, radius and index must be positive")
    if lmax is None:
        lmax = int(math.ceil(kappa * radius * max(1.0, index))) + 20
    ls = np.arange(-lmax, lmax + 1)
    al = np.abs(ls)
    ka, nka = kappa * radius, index * kappa * radius
    Jn, dJn = special.jv(al, nka), special.jvp(al, nka)
    J, dJ = special.jv(al, ka), special.jvp(al, ka)
    H, dH = special.hankel1(al, ka), special.h1vp(al, ka)
    c = (1j) ** al * np.exp(-1j * ls * alpha)
    # a Jn - b H = c J ;  a n dJn - b dH = c dJ
    det = -Jn * dH + index * dJn * H
    a = c * (-J * dH + dJ * H) / det
    b = c * (Jn * dJ - index * dJn * J) / det
    return MieSolution(kappa, radius, index, alpha, ls, a, b)


def mie_total_field(sol: MieSolution, points) -> np.ndarray:
    """Total field at ``points`` (inside and outside the disc)."""
    p = np.asarray(points, dtype=float).reshape(-1, 2)
    r = np.hypot(p[:, 0], p[:, 1])
    th = np.arctan2(p[:, 1], p[:, 0])
    al = np.abs(sol.orders)
    e = np.exp(1j * np.outer(th, sol.orders))
    inside = r <= sol.radius
    out = np.empty(r.size, dtype=complex)
    if np.any(inside):
        Jn = special.jv(al[None, :], sol.index * sol.kappa * r[inside, None])
        out[inside] = np.sum(sol.interior * Jn * e[inside], axis=1)
    if np.any(~inside):
        ro = r[~inside]
        H = special.hankel1(al[None, :], sol.kappa * ro[:, None])
        inc = np.exp(1j * sol.kappa * (p[~inside] @ np.array([math.cos(sol.alpha), math.sin(sol.alpha)])))
        out[~inside] = inc + np.sum(sol.scattered * H * e[~inside], axis=1)
    return out


def relative_errors(approx, exact) -> tuple[float, float]:
    """``(eps_inf, eps_2)``: max-norm and 2-norm errors relative to ``exact``.

    Raises
    ------
    ValueError
        If shapes differ or ``exact`` vanishes identically.
    """
    a = np.asarray(approx)
    e = np.asarray(exact)
    if a.shape != e.shape:
        raise ValueError("shape mismatch")
    emax = np.max(np.abs(e))
    if emax == 0:
        raise ValueError("reference field vanishes")
    d = np.abs(a - e)
    return float(d.max() / emax), float(np.sqrt(np.sum(d**2) / np.sum(np.abs(e) ** 2)))


def convergence_orders(errors, ratio: float = 2.0) -> np.ndarray:
    """Observed orders ``log(e_coarse / e_fine) / log(ratio)``; first entry is NaN."""
    e = np.asarray(errors, dtype=float)
    out = np.full(e.shape, np.nan)
    with np.errstate(divide="ignore", invalid="ignore"):
        out[1:] = np.log(e[:-1] / e[1:]) / math.log(ratio)
    return out
