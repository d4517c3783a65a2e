"""High-order Nystrom solver for the 2D Lippmann-Schwinger equation.

The package discretizes the volume integral equation

    u(x) + kappa^2 * int_Omega G(x, y) m(y) u(y) dy = u_inc(x)

on overlapping coordinate patches with partition-of-unity weights, treats
the kernel singularity with localized polar and graded one-dimensional
rules, and accelerates the smooth far interactions with equivalent sources
and FFT convolution.  A restarted GMRES drives the matrix-free solve.
"""

from importlib.metadata import PackageNotFoundError, version

try:  # pragma: no cover - metadata only exists once installed
    __version__ = version("artifact")
except PackageNotFoundError:  # pragma: no cover
    __version__ = "0.0.0"

__all__ = ["__version__"]
