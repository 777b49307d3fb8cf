"""The f_xi profile family and the truncated random-feature witness vector.

For ``||x|| = z`` and a neuron with ``u ~ N(0, I/4)`` and bias ``b ~ N(0, 1/4)``
truncated to ``[threshold, upper]``, the expected feature is available in
closed form through Owen's T. Two such expectations, with the bias truncated
at 0 and at ``1/sqrt(2)``, combine into

    f_xi(z) = (2/pi) arctan(a) - xi * 4/(1 - erf 1) * T(sqrt 2, a),
    a = 1/sqrt(2 + z^2),

which is positive near the origin, dips below zero past a crossing point and
returns to 0 from below. Choosing ``xi = g(lam)`` places the crossing at
``lam``; the witness keeps neurons whose bias and initial output sign match
the two truncations, so that its expected output follows ``f_xi``.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import specfun

XI_LOW, XI_HIGH = 0.45, 0.472
ONE_MINUS_ERF1 = 1.0 - math.erf(1.0)
OWEN_COEF = 4.0 / ONE_MINUS_ERF1
ROOT2 = math.sqrt(2.0)
BISECT_ITERS = 200


class OutOfRangeError(ValueError):
    pass


class OutOfImageError(ValueError):
    def __init__(self, msg, image):
        super().__init__(f"{msg}; attainable range {image}")
        self.image = image


class DegenerateWitnessError(ValueError):
    pass


def _a(z):
    return 1.0 / np.sqrt(2.0 + np.square(z))


def arctan_term(z):
    """``(2/pi) arctan(1/sqrt(2+z^2))``, the bias-above-0 expectation."""
    return specfun._out(2.0 / math.pi * np.arctan(_a(np.asarray(z, dtype=float))))


def owen_term(z):
    """``4/(1-erf 1) T(sqrt 2, 1/sqrt(2+z^2))``, the bias-above-1/sqrt(2) expectation."""
    return specfun._out(OWEN_COEF * np.asarray(specfun.owen_t(ROOT2, _a(np.asarray(z, dtype=float)))))


def f_xi(z, xi):
    return specfun._out(np.asarray(arctan_term(z)) - xi * np.asarray(owen_term(z)))


def f_xi_derivative(z, xi):
    """Closed-form derivative of ``f_xi`` in ``z``."""
    z = np.asarray(z, dtype=float)
    s = 2.0 + z * z
    pref = 2.0 * z / (math.pi * ONE_MINUS_ERF1 * (1.0 + s) * np.sqrt(s))
    return specfun._out(pref * (xi * np.exp(-(1.0 + 1.0 / s)) - ONE_MINUS_ERF1))


def xi_for_radius(lam):
    """``g(lam)``: the xi for which ``f_xi`` vanishes at ``lam``."""
    if not 1.0 <= lam <= 2.0:
        raise OutOfRangeError("lambda must lie in [1, 2]")
    a = 1.0 / math.sqrt(2.0 + lam * lam)
    xi = ONE_MINUS_ERF1 / (2.0 * math.pi) * math.atan(a) / specfun.owen_t(ROOT2, a)
    if not XI_LOW - 1e-9 <= xi <= XI_HIGH + 1e-9:
        raise OutOfRangeError(f"g({lam}) = {xi} left [{XI_LOW}, {XI_HIGH}]")
    return xi


def f_xi_argmin(xi):
    """Location of the global minimum of ``f_xi`` on ``[0, inf)``."""
    return math.sqrt(1.0 / (math.log(xi / ONE_MINUS_ERF1) - 1.0) - 2.0)


def _bisect(fn, lo, hi, target, increasing):
    for _ in range(BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        above = fn(mid) > target
        if above == increasing:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def f_xi_inverse(branch, y, xi):
    """Invert ``f_xi`` on one of its monotone branches.

    ``branch="decreasing"`` searches ``[0, z*]`` and ``"increasing"`` searches
    ``[z*, inf)``, where ``z*`` is :func:`f_xi_argmin`.
    """
    zs = f_xi_argmin(xi)
    fmin = f_xi(zs, xi)
    fn = lambda z: f_xi(z, xi)  # noqa: E731
    if branch == "decreasing":
        image = (fmin, fn(0.0))
        if not image[0] <= y <= image[1]:
            raise OutOfImageError(f"y={y} not attained on the decreasing branch", image)
        return _bisect(fn, 0.0, zs, y, increasing=False)
    if branch == "increasing":
        image = (fmin, 0.0)
        if not image[0] <= y < image[1]:
            raise OutOfImageError(f"y={y} not attained on the increasing branch", image)
        hi = 2.0 * zs
        while fn(hi) <= y:
            hi *= 2.0
        return _bisect(fn, zs, hi, y, increasing=True)
    raise ValueError("branch must be 'decreasing' or 'increasing'")


def truncated_expectation(znorm, threshold, sigma=0.5, upper=math.inf):
    """``E[erf(<U, x> + B)]`` at ``||x|| = znorm``.

    ``U ~ N(0, sigma^2 I)`` and ``B ~ N(0, sigma^2)`` conditioned on
    ``threshold <= B <= upper``.
    """
    if not threshold < upper:
        raise ValueError("threshold must be below upper")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    z = np.asarray(znorm, dtype=float)
    k = ROOT2 * sigma / np.sqrt(1.0 + 2.0 * np.square(z) * sigma * sigma)
    s = ROOT2 * sigma
    mass = math.erf(upper / s) - math.erf(threshold / s)
    t_lo = np.asarray(specfun.owen_t(threshold / sigma, k))
    t_hi = np.asarray(specfun.owen_t(upper / sigma, k))
    return specfun._out(4.0 / mass * (t_lo - t_hi))


@dataclass(frozen=True)
class WitnessCertificate:
    v: np.ndarray
    A1: np.ndarray
    A2: np.ndarray
    groups: np.ndarray
    intervals: tuple
    degenerate: tuple
    xi: float
    xi_profile: float
    lam: float
    mode: str
    margins: dict
    layer_seed: int
    meta: dict = field(default_factory=dict)

    @property
    def r(self):
        return self.v.shape[0]

    @property
    def v_norm_sq(self):
        return float(self.v @ self.v)

    def to_json(self):
        return json.dumps({
            "lambda": self.lam,
            "xi_hat": self.xi,
            "xi_profile": self.xi_profile,
            "mode": self.mode,
            "A1_size": int(self.A1.size),
            "A2_size": int(self.A2.size),
            "intervals": [list(iv) for iv in self.intervals],
            "degenerate": list(self.degenerate),
            "v_norm_sq": self.v_norm_sq,
            "margins": self.margins,
            "layer_seed": self.layer_seed,
            **self.meta,
        }, indent=2, sort_keys=True)


def default_margins(r, n, delta):
    return {
        "upper": 2.0 * r ** -0.25,
        "lower": -(r ** -0.25),
        "tail": -10.0 * math.sqrt(math.log(8.0 * n / delta) / r),
    }


def _boundary(branch, y, xi, zs):
    # thresholds outside the attainable image collapse the interval they bound
    try:
        return f_xi_inverse(branch, y, xi), False
    except OutOfImageError as err:
        lo, hi = err.image
        if branch == "decreasing":
            return (0.0 if y > hi else zs), True
        return zs if y < lo else math.inf, True


def build_witness(layer, w0, lam, mode="calibrated", n=50_000, delta=0.05, margins=None):
    """Construct the truncated witness vector ``v`` for radius ``lam``.

    Group 1 is the first ``r/2`` neurons, group 2 the rest. ``A1`` keeps the
    group-1 neurons with ``b >= 0`` and ``w0 > 0``; ``A2`` keeps group-2
    neurons with ``b >= 1/sqrt(2)`` and ``w0 < 0``. Then ``v = r^{-3/4}`` on
    ``A1`` and ``-xi_hat r^{-3/4}`` on ``A2``.

    ``mode="paper_faithful"`` uses ``xi_hat = g(lam)``. ``mode="calibrated"``
    rescales it by ``|A1|/|A2|`` so that the expected output, as a function
    of ``||x||``, crosses zero exactly at ``lam``.

    The interval boundaries invert ``f_{g(lam)}`` at the three thresholds in
    ``margins`` (keys ``upper``, ``lower``, ``tail``). A threshold outside
    the image of its branch leaves an empty interval, flagged in
    ``degenerate``.
    """
    r = layer.r
    if r % 2:
        raise ValueError("r must be even")
    if mode not in ("paper_faithful", "calibrated"):
        raise ValueError(f"unknown mode {mode!r}")
    w0 = np.asarray(w0, dtype=float)
    if w0.shape != (r,):
        raise ValueError("w0 must have length r")
    half = r // 2
    groups = np.where(np.arange(r) < half, 1, 2)
    b = layer.b
    A1 = np.flatnonzero((groups == 1) & (b >= 0) & (w0 > 0))
    A2 = np.flatnonzero((groups == 2) & (b >= 1 / ROOT2) & (w0 < 0))
    if A1.size == 0 or A2.size == 0:
        raise DegenerateWitnessError(f"|A1|={A1.size}, |A2|={A2.size}")

    g = xi_for_radius(lam)
    xi_hat = g if mode == "paper_faithful" else g * A1.size / A2.size
    scale = r ** -0.75
    v = np.zeros(r)
    v[A1] = scale
    v[A2] = -xi_hat * scale

    m = default_margins(r, n, delta)
    if margins:
        m.update(margins)
    zs = f_xi_argmin(g)
    b1, e1 = _boundary("decreasing", m["upper"], g, zs)
    b2, _ = _boundary("decreasing", m["lower"], g, zs)
    b3, _ = _boundary("increasing", m["tail"], g, zs)
    b2 = max(b2, b1)
    b3 = max(b3, b2)
    intervals = ((0.0, b1), (b1, b2), (b2, b3), (b3, math.inf))
    degenerate = tuple(bool(hi <= lo) for lo, hi in intervals)
    v.setflags(write=False)
    return WitnessCertificate(
        v=v, A1=A1, A2=A2, groups=groups, intervals=intervals, degenerate=degenerate,
        xi=float(xi_hat), xi_profile=float(g), lam=float(lam), mode=mode,
        margins=m, layer_seed=layer.seed,
        meta={"upper_threshold_attained": not e1, "n": n, "delta": delta},
    )


def witness_expectation_curve(cert, z):
    """``E[v . x~ | ||x|| = z]`` from the two closed-form truncated expectations."""
    scale = cert.r ** -0.75
    e0 = np.asarray(truncated_expectation(z, 0.0))
    e2 = np.asarray(truncated_expectation(z, 1 / ROOT2))
    return specfun._out(scale * (cert.A1.size * e0 - cert.xi * cert.A2.size * e2))


def expectation_zero(cert, hi=None):
    """Zero crossing of :func:`witness_expectation_curve` on ``[0, hi]``, or None."""
    hi = f_xi_argmin(cert.xi_profile) if hi is None else hi
    fn = lambda z: witness_expectation_curve(cert, z)  # noqa: E731
    if fn(0.0) <= 0 or fn(hi) >= 0:
        return None
    return _bisect(fn, 0.0, hi, 0.0, increasing=False)


def witness_predict(cert, Xtilde):
    """Ball-membership guess ``1{v . x~ > 0}``."""
    return (np.asarray(Xtilde) @ cert.v > 0).astype(np.int8)
