"""One-loop running coupling pi(p) and the Uehling charge density.

The radial density is u(x) = 8 pi x^2 U(x),

    u(x) = -(16 gamma / 3 pi) x int_1^inf sqrt(zeta^2 - 1) w(zeta) e^(-2 zeta x) dzeta

with w(zeta) = 1 + 1/(2 zeta^2). Its sign follows the physical induced
charge: negative cloud around a positive nucleus, balanced by a point charge
at the origin. All zeta integrals use zeta = cosh t, which removes the
square-root endpoint.

`literal=True` switches to the alternative kernels M^2 = p^2 (1 - x) + 1 and
w(zeta) = 1 + 1/(2 zeta); kept for comparison only.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

__all__ = [
    "UehlingDensity",
    "pi_running",
    "pi_zero",
    "u_position",
    "u_laplace",
    "enclosed_charge",
]

_EPSREL = 1e-12


def _weight(zeta, literal: bool):
    return 1.0 + (0.5 / zeta if literal else 0.5 / (zeta * zeta))


def pi_zero(Lambda0: float) -> float:
    """pi(0) = log(Lambda0^2) / (12 pi^2) - 1 / (36 pi^2)."""
    return math.log(Lambda0 * Lambda0) / (12.0 * math.pi ** 2) - 1.0 / (36.0 * math.pi ** 2)


def pi_running(p: float, Lambda0: float, *, literal: bool = False) -> float:
    """Running coupling pi(p) with electron mass 1 and cut-off Lambda0."""
    if p < 0:
        raise ValueError("p must be non-negative")
    if Lambda0 <= 0:
        raise ValueError("Lambda0 must be positive")
    if p == 0:
        return pi_zero(Lambda0)
    p2 = p * p
    if literal:
        f = lambda x: x * (1.0 - x) * math.log1p(p2 * (1.0 - x))
        val, _ = integrate.quad(f, 0.0, 1.0, epsabs=0.0, epsrel=_EPSREL, limit=200)
    else:
        # symmetric about 1/2
        f = lambda x: x * (1.0 - x) * math.log1p(p2 * x * (1.0 - x))
        val, _ = integrate.quad(f, 0.0, 0.5, epsabs=0.0, epsrel=_EPSREL, limit=200)
        val *= 2.0
    return pi_zero(Lambda0) - val / (2.0 * math.pi ** 2)


def _zeta_quad(g, rate: float, *, complex_valued: bool = False) -> complex:
    """int_1^inf sqrt(zeta^2-1) g(zeta) dzeta = int_0^T sinh(t)^2 g(cosh t) dt,
    where g decays at least like e^(-rate (zeta - 1)); T cuts at e^(-700)."""
    t_max = math.acosh(1.0 + 700.0 / rate)

    def part(fn):
        val, _ = integrate.quad(lambda t: math.sinh(t) ** 2 * fn(g(math.cosh(t))),
                                0.0, t_max, epsabs=0.0, epsrel=_EPSREL, limit=400)
        return val

    if complex_valued:
        return complex(part(lambda v: v.real), part(lambda v: v.imag))
    return part(lambda v: v.real)


def u_position(x, gamma: float, *, literal: bool = False):
    """Uehling radial density u(x) for x > 0 (scalar or array)."""
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(xs <= 0):
        raise ValueError("u_position needs x > 0")
    pref = -16.0 * gamma / (3.0 * math.pi)
    out = np.empty_like(xs)
    for i, xi in enumerate(xs):
        # factor e^(-2x) pulled out so the integrand stays O(1) at large x
        val = _zeta_quad(lambda z: _weight(z, literal) * math.exp(-2.0 * (z - 1.0) * xi), 2.0 * xi)
        out[i] = pref * xi * math.exp(-2.0 * xi) * val
    return out if np.ndim(x) else float(out[0])


def _x_exp_integral(q, a, b):
    """int_a^b x e^(-q x) dx for q != 0 (complex allowed)."""
    return ((a * q + 1.0) * np.exp(-a * q) - (b * q + 1.0) * np.exp(-b * q)) / (q * q)


def u_laplace(p, a: float, b: float, gamma: float, *, literal: bool = False):
    """Restricted Laplace transform int_a^b u(x) e^(-p x) dx.

    Accepts complex p (e.g. the imaginary axis); returns complex then.
    """
    if not 0 < a <= b:
        raise ValueError("need 0 < a <= b")
    if a == b or gamma == 0:
        return 0.0 * p
    is_complex = isinstance(p, complex) or np.iscomplexobj(p)
    if not is_complex and p < 0:
        raise ValueError("p must be non-negative")
    pref = -16.0 * gamma / (3.0 * math.pi)

    def g(z):
        # shifted by e^(2a) so the integrand stays O(1); undone below
        q = 2.0 * z + p
        return _weight(z, literal) * _x_exp_integral(q, a, b) * math.exp(2.0 * a)

    val = _zeta_quad(g, 2.0 * a, complex_valued=is_complex)
    return pref * math.exp(-2.0 * a) * val


def enclosed_charge(R: float, gamma: float, *, literal: bool = False) -> float:
    """Induced charge inside radius R, from the Uehling potential by Gauss's law:

        Q(R) = (2 gamma / 3 pi) int_1^inf sqrt(zeta^2-1) w(zeta) (1 + 2 zeta R) e^(-2 zeta R) / zeta^2

    Q counts the point charge at the origin too, so Q -> 0 as R -> inf
    states neutrality, and dQ/dR = 4 pi R^2 U(R) = u(R) / 2.
    """
    if R <= 0:
        raise ValueError("R must be positive")
    val = _zeta_quad(lambda z: _weight(z, literal) * (1.0 + 2.0 * z * R)
                     * math.exp(-2.0 * (z - 1.0) * R) / (z * z), 2.0 * R)
    return 2.0 * gamma / (3.0 * math.pi) * math.exp(-2.0 * R) * val


@dataclass(frozen=True)
class UehlingDensity:
    """Uehling density bound to a coupling and a working interval."""

    gamma: float
    a: float
    b: float
    tol: float = _EPSREL
    literal: bool = False

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError("need a < b")
        if self.tol <= 0:
            raise ValueError("tolerance must be positive")

    def __call__(self, x):
        return u_position(x, self.gamma, literal=self.literal)

    def laplace(self, p):
        return u_laplace(p, self.a, self.b, self.gamma, literal=self.literal)
