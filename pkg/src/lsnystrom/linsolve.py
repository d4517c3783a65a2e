"""Matrix-free restarted GMRES for complex systems."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

logger = logging.getLogger(__name__)

__all__ = ["GmresConfig", "GmresResult", "gmres"]


@dataclass(frozen=True)
class GmresConfig:
    """Stopping and restart parameters.

    Parameters
    ----------
    tol : float
        Relative residual target ``||A x - b|| / ||b||``.
    restart : int
        Krylov dimension per cycle.
    maxiter : int
        Cap on the total number of Arnoldi steps.
    reorth_ratio : float
        A second Gram-Schmidt pass runs when orthogonalization shrinks the
        new vector below this fraction of its norm.
    """

    tol: float = 1e-5
    restart: int = 50
    maxiter: int = 500
    reorth_ratio: float = 0.7

    def __post_init__(self):
        if not 0 < self.tol < 1:
            raise ValueError("tol must lie in (0, 1)")
        if self.restart < 1 or self.maxiter < 1:
            raise ValueError("restart and maxiter must be positive")


@dataclass
class GmresResult:
    """Outcome of a solve.

    ``status`` is ``"converged"``, ``"maxiter"`` or ``"breakdown"``; ``x`` is
    always the best iterate found.
    """

    x: np.ndarray
    iterations: int
    status: str
    residual: float
    history: list = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.status == "converged"


def _givens(a: complex, b: complex):
    """Complex rotation ``(c, s)`` with ``[c s; -conj(s) c] [a; b] = [r; 0]``."""
    if b == 0:
        return 1.0, 0j
    if a == 0:
        return 0.0, complex(np.conj(b) / abs(b))
    t = math.hypot(abs(a), abs(b))
    c = abs(a) / t
    s = (a / abs(a)) * np.conj(b) / t
    return c, complex(s)


def gmres(apply: Callable[[np.ndarray], np.ndarray], rhs, config: GmresConfig | None = None, x0=None) -> GmresResult:
    """Solve ``apply(x) = rhs`` by restarted GMRES with modified Gram-Schmidt.

    Parameters
    ----------
    apply : callable
        Linear map on complex vectors of the size of ``rhs``.
    rhs : array_like
        Right-hand side.
    config : GmresConfig, optional
    x0 : array_like, optional
        Starting guess, zero by default.

    Returns
    -------
    GmresResult
        ``history`` holds the relative residual estimate after every step,
        starting with the initial residual.

    Raises
    ------
    ValueError
        If ``rhs`` has non-finite entries or ``apply`` changes the shape.
    """
    cfg = config or GmresConfig()
    b = np.asarray(rhs, dtype=complex).ravel()
    if not np.all(np.isfinite(b)):
        raise ValueError("rhs must be finite")
    bnorm = np.linalg.norm(b)
    n = b.size
    x = np.zeros(n, dtype=complex) if x0 is None else np.array(x0, dtype=complex).ravel()
    if bnorm == 0:
        return GmresResult(np.zeros(n, dtype=complex), 0, "converged", 0.0, [0.0])

    def A(v):
        w = np.array(apply(v), dtype=complex).ravel()  # private copy: w is updated in place
        if w.shape != (n,):
            raise ValueError("operator changed the vector length")
        return w

    r = b - A(x) if x0 is not None else b.copy()
    beta = np.linalg.norm(r)
    history = [beta / bnorm]
    its = 0
    m = cfg.restart
    while True:
        if history[-1] <= cfg.tol:
            return GmresResult(x, its, "converged", history[-1], history)
        if its >= cfg.maxiter:
            logger.warning("GMRES stopped at maxiter=%d, residual %.3e", cfg.maxiter, history[-1])
            return GmresResult(x, its, "maxiter", history[-1], history)
        V = np.zeros((m + 1, n), dtype=complex)
        H = np.zeros((m + 1, m), dtype=complex)
        cs = np.zeros(m)
        sn = np.zeros(m, dtype=complex)
        g = np.zeros(m + 1, dtype=complex)
        g[0] = beta
        V[0] = r / beta
        k = 0
        breakdown = False
        while k < m and its < cfg.maxiter:
            w = A(V[k])
            wnorm0 = np.linalg.norm(w)
            for j in range(k + 1):
                h = np.vdot(V[j], w)
                H[j, k] += h
                w -= h * V[j]
            hn = np.linalg.norm(w)
            if hn < cfg.reorth_ratio * wnorm0:
                # cancellation: one more pass restores orthogonality
                for j in range(k + 1):
                    h = np.vdot(V[j], w)
                    H[j, k] += h
                    w -= h * V[j]
                hn = np.linalg.norm(w)
            H[k + 1, k] = hn
            for j in range(k):
                t = cs[j] * H[j, k] + sn[j] * H[j + 1, k]
                H[j + 1, k] = -np.conj(sn[j]) * H[j, k] + cs[j] * H[j + 1, k]
                H[j, k] = t
            cs[k], sn[k] = _givens(H[k, k], H[k + 1, k])
            H[k, k] = cs[k] * H[k, k] + sn[k] * H[k + 1, k]
            H[k + 1, k] = 0
            g[k + 1] = -np.conj(sn[k]) * g[k]
            g[k] = cs[k] * g[k]
            its += 1
            k += 1
            history.append(abs(g[k]) / bnorm)
            if hn <= np.finfo(float).tiny * 1e3 or hn <= 1e-14 * wnorm0:
                breakdown = True
                break
            V[k] = w / hn
            if history[-1] <= cfg.tol:
                break
        y = np.linalg.solve(np.triu(H[:k, :k]), g[:k]) if k else np.zeros(0, dtype=complex)
        x = x + V[:k].T @ y
        r = b - A(x)
        beta = np.linalg.norm(r)
        true_res = beta / bnorm
        logger.debug("GMRES cycle done: %d steps, true residual %.3e", its, true_res)
        if breakdown:
            # an invariant subspace was found: the iterate is exact up to rounding
            status = "converged" if true_res <= cfg.tol else "breakdown"
            if status == "breakdown":
                logger.warning("GMRES breakdown with residual %.3e", true_res)
            history[-1] = true_res
            return GmresResult(x, its, status, true_res, history)
        # the loop head tests the true residual, never the recurrence estimate
        history[-1] = true_res
