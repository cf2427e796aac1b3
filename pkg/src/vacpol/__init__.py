"""Nonperturbative vacuum polarization of hydrogen-like ions and heavy atoms:
Dirac-Coulomb spectral density, Laplace-domain decomposition, cut-off
extrapolation and the dilated flow of the running constant nu5."""

__version__ = "0.1.0"

from .radial import ALPHA, PhysicalParams  # noqa: E402,F401
