"""Scalar special functions used by the densities and closed forms.

Everything here is a thin, validated layer over :mod:`scipy.special` except
Owen's T, which is integrated directly from its defining integral. All
functions accept scalars or array-likes and return the same shape.
"""

import math

import numpy as np
from scipy import integrate, special

MAX_BESSEL_ORDER = 64.0


class DomainError(ValueError):
    """Argument outside the mathematical domain of a function."""


class UnsupportedOrderError(ValueError):
    """Bessel order above the supported cap."""


def _out(x):
    # unwrap 0-d arrays so scalar in gives scalar out
    return np.asarray(x).item() if np.ndim(x) == 0 else x


def erf(x):
    """Error function, odd and strictly increasing with range (-1, 1)."""
    return _out(special.erf(np.asarray(x, dtype=float)))


def erf_inv(p):
    """Inverse error function on the open interval (-1, 1).

    Raises
    ------
    DomainError
        If any ``|p| >= 1``.
    """
    p = np.asarray(p, dtype=float)
    if np.any(~(np.abs(p) < 1.0)):
        raise DomainError("erf_inv requires |p| < 1")
    return _out(special.erfinv(p))


def _owen_t_quad(h, a):
    if a == 0.0:
        return 0.0
    c = 0.5 * h * h

    def integrand(t):
        s = 1.0 + t * t
        return math.exp(-c * s) / s

    val, _ = integrate.quad(integrand, 0.0, a, epsabs=1e-15, epsrel=1e-13, limit=200)
    return val / (2.0 * math.pi)


def owen_t(h, a):
    r"""Owen's T function :math:`T(h,a)=\frac{1}{2\pi}\int_0^a e^{-h^2(1+t^2)/2}/(1+t^2)\,dt`.

    Evaluated by adaptive Gauss-Kronrod quadrature of the defining integral.
    Negative arguments are handled through ``T(-h, a) = T(h, a)`` and
    ``T(h, -a) = -T(h, a)``; ``h = inf`` gives 0.
    """
    h_arr, a_arr = np.broadcast_arrays(np.asarray(h, dtype=float), np.asarray(a, dtype=float))
    out = np.empty(h_arr.shape)
    for idx in np.ndindex(h_arr.shape):
        hh = abs(float(h_arr[idx]))
        aa = float(a_arr[idx])
        if math.isinf(hh):
            out[idx] = 0.0
            continue
        sign = -1.0 if aa < 0 else 1.0
        out[idx] = sign * _owen_t_quad(hh, abs(aa))
    return _out(out)


def bessel_j(nu, x):
    """Bessel function of the first kind ``J_nu(x)`` for ``0 <= nu <= 64``, ``x >= 0``.

    Raises
    ------
    UnsupportedOrderError
        If ``nu`` exceeds the order cap of 64.
    DomainError
        For negative ``nu`` or ``x``.
    """
    nu = np.asarray(nu, dtype=float)
    x = np.asarray(x, dtype=float)
    if np.any(nu > MAX_BESSEL_ORDER):
        raise UnsupportedOrderError(f"Bessel order above {MAX_BESSEL_ORDER:g} not supported")
    if np.any(nu < 0) or np.any(x < 0):
        raise DomainError("bessel_j requires nu >= 0 and x >= 0")
    return _out(special.jv(nu, x))


def reg_lower_gamma(a, x):
    """Regularized lower incomplete gamma ``P(a, x)``."""
    a = np.asarray(a, dtype=float)
    x = np.asarray(x, dtype=float)
    if np.any(a <= 0) or np.any(x < 0):
        raise DomainError("reg_lower_gamma requires a > 0 and x >= 0")
    return _out(special.gammainc(a, x))


def log_gamma(x):
    """Natural log of the gamma function for ``x > 0``."""
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise DomainError("log_gamma requires x > 0")
    return _out(special.gammaln(x))
