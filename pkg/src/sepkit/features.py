"""Frozen random hidden layer with erf units and the laws of its features."""

import json
from dataclasses import dataclass

import numpy as np

from . import specfun


class DimensionMismatchError(ValueError):
    pass


class DegenerateSpanError(ValueError):
    pass


@dataclass(frozen=True)
class HiddenLayer:
    """First-layer weights ``U`` (r x d) and biases ``b`` (r), all ``N(0, 1/4)``."""

    U: np.ndarray
    b: np.ndarray
    seed: int

    @property
    def r(self):
        return self.U.shape[0]

    @property
    def d(self):
        return self.U.shape[1]

    def to_json(self):
        return json.dumps({"d": self.d, "r": self.r, "seed": self.seed})

    @classmethod
    def from_json(cls, text):
        rec = json.loads(text)
        return init_hidden(rec["d"], rec["r"], rec["seed"])


def init_hidden(d, r, seed):
    """Draw a hidden layer; the layer is a pure function of ``(d, r, seed)``."""
    if d < 2 or r < 1:
        raise ValueError("init_hidden requires d >= 2 and r >= 1")
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(1,)))
    U = rng.normal(0.0, 0.5, size=(r, d))
    b = rng.normal(0.0, 0.5, size=r)
    U.setflags(write=False)
    b.setflags(write=False)
    return HiddenLayer(U, b, int(seed))


def init_output(r, seed):
    """Output weights with i.i.d. ``N(0, 1/r^2)`` entries."""
    if r < 1:
        raise ValueError("r must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(2,)))
    return rng.normal(0.0, 1.0 / r, size=r)


def preactivations(layer, X):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != layer.d:
        raise DimensionMismatchError(f"X has {X.shape[1]} columns, layer expects {layer.d}")
    return X @ layer.U.T + layer.b


def feature_map(layer, X, dtype=np.float64, chunk=8192):
    """Features ``erf(U x + b)`` for every row of ``X``, shape ``(n, r)``.

    Entries are clipped to the open interval (-1, 1) so that saturation in
    floating point never produces an exact +-1. ``dtype=np.float32`` halves
    the memory of large feature matrices.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != layer.d:
        raise DimensionMismatchError(f"X has {X.shape[1]} columns, layer expects {layer.d}")
    out = np.empty((X.shape[0], layer.r), dtype=dtype)
    edge = np.nextafter(dtype(1), dtype(0))
    for s in range(0, X.shape[0], chunk):
        z = specfun.erf(X[s:s + chunk] @ layer.U.T + layer.b)
        out[s:s + chunk] = np.clip(z, -edge, edge)
    return out


def _check_open(z):
    z = np.asarray(z, dtype=float)
    if np.any(~(np.abs(z) < 1)):
        raise specfun.DomainError("feature value must lie in (-1, 1)")
    return z


def conditional_feature_density(z, x):
    """Density of one feature at ``z`` given input norm ``x``."""
    z = _check_open(z)
    x = np.asarray(x, dtype=float)
    q = specfun.erf_inv(z)
    s = 1.0 + x * x
    return specfun._out(np.exp(np.square(q) * (1.0 - 2.0 / s)) / np.sqrt(2.0 * s))


def conditional_feature_cdf(z, x):
    """CDF of one feature at ``z`` given input norm ``x``."""
    z = _check_open(z)
    x = np.asarray(x, dtype=float)
    q = specfun.erf_inv(z)
    return specfun._out(0.5 + 0.5 * specfun.erf(q / (0.5 * np.sqrt(2.0 + 2.0 * x * x))))


@dataclass
class MarginalDensity:
    edges: np.ndarray
    density: np.ndarray
    inner_radius: float
    min_inner_density: float
    n: int


def orthonormal_pair(w1, w2, tol=1e-12):
    w1 = np.asarray(w1, dtype=float)
    w2 = np.asarray(w2, dtype=float)
    n1 = np.linalg.norm(w1)
    if n1 == 0:
        raise DegenerateSpanError("w1 is zero")
    e1 = w1 / n1
    rest = w2 - (w2 @ e1) * e1
    n2 = np.linalg.norm(rest)
    if n2 <= tol * max(np.linalg.norm(w2), 1.0):
        raise DegenerateSpanError("w1 and w2 are parallel")
    return e1, rest / n2


def marginal_density_estimate(Xtilde, w1, w2, grid_radius=1.0, bins=40, inner_radius=1 / 9):
    """Histogram estimate of the 2-D law of ``x~`` projected on ``span(w1, w2)``.

    The pair is orthonormalized first. Bins are squares of side
    ``grid_radius / bins`` covering ``[-grid_radius, grid_radius]^2``; the
    reported minimum is over bins lying entirely inside the disk of radius
    ``inner_radius``.
    """
    Xtilde = np.asarray(Xtilde)
    if Xtilde.ndim != 2 or Xtilde.shape[0] == 0:
        raise ValueError("empty feature matrix")
    e1, e2 = orthonormal_pair(w1, w2)
    P = np.column_stack([Xtilde @ e1, Xtilde @ e2])
    edges = np.linspace(-grid_radius, grid_radius, 2 * bins + 1)
    counts, _, _ = np.histogram2d(P[:, 0], P[:, 1], bins=[edges, edges])
    width = edges[1] - edges[0]
    density = counts / (Xtilde.shape[0] * width * width)
    lo, hi = edges[:-1], edges[1:]
    far = np.maximum(np.abs(lo), np.abs(hi))
    inside = far[:, None] ** 2 + far[None, :] ** 2 <= inner_radius ** 2
    if not inside.any():
        raise ValueError("no bin fits inside the inner disk; increase bins")
    return MarginalDensity(edges, density, inner_radius, float(density[inside].min()), Xtilde.shape[0])


def preactivation_variance(x):
    """Variance of ``<U_j, x> + B_j`` for ``||x|| = x``."""
    return 0.25 * (1.0 + np.square(x))


__all__ = [
    "HiddenLayer",
    "init_hidden",
    "init_output",
    "feature_map",
    "preactivations",
    "conditional_feature_density",
    "conditional_feature_cdf",
    "marginal_density_estimate",
    "orthonormal_pair",
    "preactivation_variance",
    "DimensionMismatchError",
    "DegenerateSpanError",
    "MarginalDensity",
]
