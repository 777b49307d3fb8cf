"""Closed-form bound calculators and an empirical generalization-gap check.

Quantities that overflow double precision are reported through ``log10``.
"""

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import distributions as dist
from . import features as feat


@dataclass(frozen=True)
class BoundReport:
    name: str
    inputs: dict
    value: float
    log10: float
    anchor: str = ""

    def row(self):
        return [self.name, repr(self.value), repr(self.log10), self.anchor,
                ";".join(f"{k}={v}" for k, v in self.inputs.items())]


def harmonic_dim(d, m):
    """Dimension of degree-``m`` spherical harmonics in ``R^d``, as an exact int."""
    if d < 3 or m < 1:
        raise ValueError("harmonic_dim requires d >= 3 and m >= 1")
    return (2 * m + d - 2) * math.factorial(m + d - 3) // (math.factorial(m) * math.factorial(d - 2))


def _log10_int(k):
    # exact ints can exceed float range; go through the bit length
    shift = max(k.bit_length() - 60, 0)
    return math.log10(k >> shift) + shift * math.log10(2)


def harmonic_dim_report(d, m):
    val = harmonic_dim(d, m)
    return BoundReport("harmonic_dim", {"d": d, "m": m}, float(val) if val < 1e300 else math.inf,
                       _log10_int(val), "spherical harmonic dimension")


def sep_lower_bound(d, m, c1=1.0, c2=1.0):
    """``log10`` of ``c1 exp(c2 min{m ln(d/m + 2), d ln(m/d + 2)})``."""
    if d < 1 or m < 1 or c1 <= 0 or c2 <= 0:
        raise ValueError("sep_lower_bound requires d, m >= 1 and c1, c2 > 0")
    e = min(m * math.log(d / m + 2), d * math.log(m / d + 2))
    return math.log10(c1) + c2 * e / math.log(10)


def sep_lower_bound_report(d, m, c1=1.0, c2=1.0):
    lg = sep_lower_bound(d, m, c1, c2)
    return BoundReport("sep_lower_bound", {"d": d, "m": m, "c1": c1, "c2": c2},
                       10 ** lg if lg < 300 else math.inf, lg, "depth-2 width/norm lower bound")


def accuracy_to_oscillation(epsilon):
    """Largest integer ``m`` with ``196 (m+1)^2 epsilon <= 1``.

    Uses exact rational arithmetic on the given value, so pass a
    :class:`fractions.Fraction` for exact boundary cases.
    """
    eps = Fraction(epsilon)
    if not 0 < float(eps) <= 1 / 400:
        raise ValueError("epsilon must lie in (0, 1/400]")
    k = math.isqrt(int(1 / (196 * eps)))  # candidate for m + 1
    while 196 * (k + 1) ** 2 * eps <= 1:
        k += 1
    while k > 0 and 196 * k ** 2 * eps > 1:
        k -= 1
    return k - 1


def growth_bound_log(n, r, m):
    """``m (r+1) ln n``, the log of the halfspace-intersection growth bound."""
    if r < 2 or m < 0:
        raise ValueError("growth_bound_log requires r >= 2 and m >= 0")
    if not n > r + 1:
        raise ValueError("growth_bound_log requires n > r + 1")
    return m * (r + 1) * math.log(n)


def generalization_bound(r, n, delta):
    """``4 sqrt(r/n) + 4 sqrt(2 ln(4/delta) / n)``."""
    if r < 1 or n < 1 or not 0 < delta < 1:
        raise ValueError("generalization_bound requires r, n >= 1 and delta in (0, 1)")
    return 4 * math.sqrt(r / n) + 4 * math.sqrt(2 * math.log(4 / delta) / n)


@dataclass
class GapCheck:
    violation_rate: float
    trials: int
    bound: float
    max_excess: float
    per_trial_excess: np.ndarray = field(repr=False)


def _random_ball(rng, k, r):
    g = rng.standard_normal((k, r))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return g * rng.random((k, 1)) ** (1.0 / r)


def check_generalization_gap(layer, spec, lam, r, n, delta, trials, seed=0,
                             n_weights=100, n_population=100_000):
    """Fraction of trials in which some ``||w|| <= 1`` beats the uniform bound.

    Each trial draws a fresh training sample of size ``n`` and ``n_weights``
    weight vectors uniform in the unit ball. A violation is
    ``F(w) > F_hat(w) + bound + 3 SE`` for any of them, where ``F`` is
    estimated on one independent sample of size ``n_population``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if layer.r != r:
        raise ValueError("layer width does not match r")
    # same expression as generalization_bound, kept separate on purpose
    bound = 4.0 * (r / n) ** 0.5 + 4.0 * (2.0 * math.log(4.0 / delta) / n) ** 0.5
    pop_seed = int(np.random.SeedSequence(int(seed), spawn_key=(8,)).generate_state(1)[0])
    pop = dist.sample(spec, n_population, lam, seed=pop_seed)
    Fp = feat.feature_map(layer, pop.X)
    yp = pop.y.astype(float)
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(7,)))
    excess = np.empty(trials)
    for t in range(trials):
        tr = dist.sample(spec, n, lam, seed=int(rng.integers(2 ** 62)))
        Ft = feat.feature_map(layer, tr.X)
        W = _random_ball(rng, n_weights, r)
        emp = np.mean(np.square(np.clip(Ft @ W.T, 0, 1) - tr.y[:, None]), axis=0)
        perr = np.square(np.clip(Fp @ W.T, 0, 1) - yp[:, None])
        popm = perr.mean(axis=0)
        se = perr.std(axis=0, ddof=1) / math.sqrt(n_population)
        excess[t] = np.max(popm - emp - bound - 3 * se)
    return GapCheck(float(np.mean(excess > 0)), trials, bound, float(excess.max()), excess)
