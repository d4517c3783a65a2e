"""Integer-order Bessel functions of real argument.

Three regimes are used for the orders 0 and 1 that the Helmholtz kernel
needs on every call:

* ``x < 8``: ascending power series,
* ``8 <= x < 25``: Miller backward recurrence normalised by
  ``J0 + 2 (J2 + J4 + ...) = 1`` together with the Neumann series for
  ``Y0`` and ``Y1``,
* ``x >= 25``: Hankel asymptotic expansion, truncated at the smallest term.

Arbitrary orders use the power series for small arguments and Miller's
recurrence otherwise for ``J_n``; ``Y_n`` follows from upward recurrence,
which is the stable direction for the second kind.

All scalar kernels are compiled with numba so that the operator assembly
can call them from its own compiled loops.
"""

from __future__ import annotations

import math

import numba as nb
import numpy as np

__all__ = [
    "bessel_j",
    "bessel_y",
    "hankel1",
    "jy01",
    "h0",
    "h1",
]

EULER_GAMMA = 0.57721566490153286061
_TWO_OVER_PI = 2.0 / math.pi
_SERIES_LIMIT = 8.0
_ASYMPTOTIC_LIMIT = 25.0


@nb.njit(cache=True)
def _series_jy01(x: float):
    q = 0.25 * x * x
    # J0 and Y0 share the terms t_k = (-q)^k / (k!)^2.
    t = 1.0
    j0 = 1.0
    ysum = 0.0
    # J1 and Y1 share u_k = (-q)^k / (k! (k+1)!).
    u = 1.0
    j1s = 1.0
    hk = 0.0
    y1s = -2.0 * EULER_GAMMA + 1.0  # psi(1) + psi(2) for k = 0
    for k in range(1, 60):
        t *= -q / (k * k)
        hk += 1.0 / k
        j0 += t
        ysum += hk * t
        u *= -q / (k * (k + 1.0))
        j1s += u
        y1s += (-2.0 * EULER_GAMMA + hk + hk + 1.0 / (k + 1.0)) * u
        if abs(t) < 1e-17 * abs(j0) and abs(u) < 1e-17 * abs(j1s) and k > 2:
            break
    half = 0.5 * x
    j1 = half * j1s
    lg = math.log(half)
    y0 = _TWO_OVER_PI * ((lg + EULER_GAMMA) * j0 - ysum)
    y1 = -_TWO_OVER_PI / x + _TWO_OVER_PI * lg * j1 - (half / math.pi) * y1s
    return j0, j1, y0, y1


@nb.njit(cache=True)
def _miller_start(n: int, x: float) -> int:
    m = max(n, int(x)) + 20 + int(math.sqrt(40.0 * max(n, x)))
    if m % 2 == 1:
        m += 1
    return m


@nb.njit(cache=True)
def _miller_sequence(x: float, nmax: int) -> np.ndarray:
    """Return J_0..J_m(x) by backward recurrence (m >= nmax, m even)."""
    m = _miller_start(nmax, x)
    seq = np.zeros(m + 2)
    seq[m + 1] = 0.0
    seq[m] = 1e-300
    big = 1e250
    for k in range(m, 0, -1):
        seq[k - 1] = (2.0 * k / x) * seq[k] - seq[k + 1]
        if abs(seq[k - 1]) > big:
            for i in range(k - 1, m + 2):
                seq[i] *= 1e-250
    norm = seq[0]
    for k in range(2, m + 1, 2):
        norm += 2.0 * seq[k]
    for k in range(m + 2):
        seq[k] /= norm
    return seq


@nb.njit(cache=True)
def _miller_jy01(x: float):
    seq = _miller_sequence(x, 1)
    m = seq.shape[0] - 2
    j0 = seq[0]
    j1 = seq[1]
    lg = math.log(0.5 * x) + EULER_GAMMA
    s0 = 0.0
    s1 = 0.0
    sign = -1.0
    for k in range(1, m // 2):
        s0 += sign * seq[2 * k] / k
        s1 += sign * (seq[2 * k - 1] - seq[2 * k + 1]) / k
        sign = -sign
    y0 = _TWO_OVER_PI * lg * j0 - 2.0 * _TWO_OVER_PI * s0
    y1 = _TWO_OVER_PI * (lg * j1 - j0 / x) + _TWO_OVER_PI * s1
    return j0, j1, y0, y1


@nb.njit(cache=True)
def _asymptotic_jy(nu: int, x: float):
    mu = 4.0 * nu * nu
    p = 1.0
    q = 0.0
    term = 1.0
    eight_x = 8.0 * x
    last = 1.0
    for k in range(1, 200):
        term *= (mu - (2.0 * k - 1.0) ** 2) / (k * eight_x)
        if abs(term) > last and k > 2:
            break
        last = abs(term)
        if k % 2 == 1:
            q += term if (k // 2) % 2 == 0 else -term
        else:
            p += -term if (k // 2) % 2 == 1 else term
        if last < 1e-17:
            break
    w = x - (0.5 * nu + 0.25) * math.pi
    amp = math.sqrt(_TWO_OVER_PI / x)
    c = math.cos(w)
    s = math.sin(w)
    return amp * (p * c - q * s), amp * (p * s + q * c)


@nb.njit(cache=True)
def jy01(x: float):
    """Return ``(J0, J1, Y0, Y1)`` at ``x > 0``."""
    if x < _SERIES_LIMIT:
        return _series_jy01(x)
    if x < _ASYMPTOTIC_LIMIT:
        return _miller_jy01(x)
    j0, y0 = _asymptotic_jy(0, x)
    j1, y1 = _asymptotic_jy(1, x)
    return j0, j1, y0, y1


@nb.njit(cache=True)
def h0(x: float) -> complex:
    """Hankel function of the first kind, order 0, for scalar ``x > 0``."""
    j0, _, y0, _ = jy01(x)
    return complex(j0, y0)


@nb.njit(cache=True)
def h1(x: float) -> complex:
    """Hankel function of the first kind, order 1, for scalar ``x > 0``."""
    _, j1, _, y1 = jy01(x)
    return complex(j1, y1)


@nb.njit(cache=True)
def _jn_series(n: int, x: float) -> float:
    q = -0.25 * x * x
    lead = 1.0
    half = 0.5 * x
    for k in range(1, n + 1):
        lead *= half / k
    term = 1.0
    total = 1.0
    for k in range(1, 300):
        term *= q / (k * (n + k))
        total += term
        if abs(term) < 1e-17 * abs(total):
            break
    return lead * total


@nb.njit(cache=True)
def _jn_scalar(n: int, x: float) -> float:
    if x == 0.0:
        return 1.0 if n == 0 else 0.0
    if x < _SERIES_LIMIT or 0.25 * x * x < 0.5 * (n + 1):
        return _jn_series(n, x)
    seq = _miller_sequence(x, n)
    return seq[n]


@nb.njit(cache=True)
def _yn_scalar(n: int, x: float) -> float:
    _, _, y0, y1 = jy01(x)
    if n == 0:
        return y0
    prev = y0
    cur = y1
    for k in range(1, n):
        nxt = (2.0 * k / x) * cur - prev
        prev = cur
        cur = nxt
        if not math.isfinite(cur):
            return -math.inf
    return cur


@nb.njit(cache=True)
def _vec_j(n: np.ndarray, x: np.ndarray, out: np.ndarray) -> None:
    for i in range(x.shape[0]):
        out[i] = _jn_scalar(n[i], x[i])


@nb.njit(cache=True)
def _vec_y(n: np.ndarray, x: np.ndarray, out: np.ndarray) -> None:
    for i in range(x.shape[0]):
        out[i] = _yn_scalar(n[i], x[i])


def _prepare(order, x, *, positive: bool):
    order_arr = np.asarray(order)
    x_arr = np.asarray(x, dtype=float)
    if not np.issubdtype(order_arr.dtype, np.integer):
        if not np.all(np.equal(np.mod(order_arr, 1), 0)):
            raise ValueError("Bessel order must be a non-negative integer")
        order_arr = order_arr.astype(np.int64)
    if np.any(order_arr < 0):
        raise ValueError("Bessel order must be non-negative")
    if not np.all(np.isfinite(x_arr)):
        raise ValueError("Bessel argument must be finite")
    if positive and np.any(x_arr <= 0):
        raise ValueError("argument must be positive (logarithmic singularity at 0)")
    if not positive and np.any(x_arr < 0):
        raise ValueError("argument must be non-negative")
    n_b, x_b = np.broadcast_arrays(order_arr.astype(np.int64), x_arr)
    return n_b, x_b


def bessel_j(order, x):
    """Bessel function of the first kind ``J_order(x)`` for ``x >= 0``.

    Parameters
    ----------
    order : int or array_like of int
        Non-negative integer order(s).
    x : float or array_like
        Non-negative finite argument(s); broadcast against ``order``.

    Returns
    -------
    float or ndarray
        Values of ``J_order(x)``.

    Raises
    ------
    ValueError
        If an order is negative or non-integer, or an argument is negative
        or not finite.
    """
    n_b, x_b = _prepare(order, x, positive=False)
    out = np.empty(x_b.size)
    _vec_j(np.ascontiguousarray(n_b).ravel(), np.ascontiguousarray(x_b).ravel(), out)
    out = out.reshape(x_b.shape)
    return float(out) if out.ndim == 0 else out


def bessel_y(order, x):
    """Bessel function of the second kind ``Y_order(x)`` for ``x > 0``.

    Raises
    ------
    ValueError
        If an argument is not strictly positive.
    """
    n_b, x_b = _prepare(order, x, positive=True)
    out = np.empty(x_b.size)
    _vec_y(np.ascontiguousarray(n_b).ravel(), np.ascontiguousarray(x_b).ravel(), out)
    out = out.reshape(x_b.shape)
    return float(out) if out.ndim == 0 else out


def hankel1(order, x):
    """Outgoing Hankel function ``H1_order(x) = J_order(x) + i Y_order(x)``."""
    j = bessel_j(order, x)
    y = bessel_y(order, x)
    return j + 1j * y
