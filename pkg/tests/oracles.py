"""Independent reference values: arbitrary-precision mpmath and adaptive
quadrature. Nothing here imports the package under test."""
import math

import mpmath as mp
import numpy as np
from scipy import integrate

mp.mp.dps = 40


def gamma(z):
    return complex(mp.gamma(mp.mpc(z)))


def hyp1f1(a, b, x):
    return complex(mp.hyp1f1(mp.mpc(a), mp.mpc(b), mp.mpc(x)))


def expint(n, p):
    return float(mp.expint(n, p))


def expint_quad(n, p):
    """E_n(p) = int_1^inf t^-n e^-pt dt by adaptive quadrature."""
    return float(mp.quad(lambda t: t ** (-n) * mp.e ** (-p * t), [1, 2, 10, mp.inf]))


def pi_running(p, lam0, literal=False):
    if literal:
        f = lambda x: x * (1 - x) * mp.log(1 + p ** 2 * (1 - x))
    else:
        f = lambda x: x * (1 - x) * mp.log(1 + p ** 2 * x * (1 - x))
    return float(mp.log(lam0 ** 2) / (12 * mp.pi ** 2) - 1 / (36 * mp.pi ** 2)
                 - mp.quad(f, [0, 0.5, 1]) / (2 * mp.pi ** 2))


def uehling_u(x, gamma):
    """-(16 gamma / 3 pi) x int_1^inf sqrt(z^2-1)(1 + 1/(2 z^2)) e^(-2 z x) dz, mpmath."""
    f = lambda z: mp.sqrt(z * z - 1) * (1 + 1 / (2 * z * z)) * mp.e ** (-2 * z * x)
    return float(-16 * gamma / (3 * mp.pi) * x * mp.quad(f, [1, 1 + 1 / x, mp.inf]))


def bound_norm_gl(sol_fn, p, n_panels=400, order=20):
    """Gauss-Legendre on [0, 40/p] of F^2 + G^2 supplied as a callable of x."""
    t, w = np.polynomial.legendre.leggauss(order)
    # fine panels near the origin where (2px)^(2s) has its singular derivative
    edges = np.concatenate([np.geomspace(1e-12, 1e-2, 60), np.linspace(1e-2, 40.0 / p, n_panels)[1:]])
    edges = np.concatenate([[0.0], edges])
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        x = 0.5 * (hi + lo) + 0.5 * (hi - lo) * t
        total += 0.5 * (hi - lo) * float(w @ sol_fn(x))
    return total


def quad(f, a, b, **kw):
    val, _ = integrate.quad(f, a, b, epsabs=0.0, epsrel=1e-12, limit=400, **kw)
    return val


def laplace_x(p, a, b):
    """int_a^b x e^(-p x) dx via mpmath."""
    return float(mp.quad(lambda x: x * mp.e ** (-p * x), [a, b]))
