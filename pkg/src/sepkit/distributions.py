"""Radial data distributions, their norm densities, samplers and labelers.

Two families are provided:

* ``bessel_mixture``: half a heavy-tailed Bessel shell law, half a Gaussian
  with covariance ``I/d``.
* ``sphere_sum``: the sum of two independent uniform points on the unit
  sphere, supported on the radius-2 ball.

Samplers are deterministic in ``seed``. Points are generated in fixed-size
chunks, each drawing from its own stream spawned from ``(seed, chunk)``, so
the result does not depend on how the chunks are scheduled.
"""

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import specfun

CHUNK = 1 << 16
TABLE_POINTS = 20_000
CSV_SCHEMA = "sepkit-dataset/1"


class TabulationError(RuntimeError):
    """Tabulated shell CDF does not reach the promised mass."""


@dataclass(frozen=True)
class DistributionSpec:
    kind: str
    d: int
    alpha: float = 1.0
    truncation_radius: float | None = None

    def __post_init__(self):
        if self.kind not in ("bessel_mixture", "sphere_sum"):
            raise ValueError(f"unknown distribution kind {self.kind!r}")
        if self.d < 2:
            raise ValueError("dimension must be at least 2")
        if self.alpha < 1:
            raise ValueError("alpha must be >= 1")
        if self.kind == "bessel_mixture":
            if self.d > 64:
                raise ValueError("bessel_mixture supports d <= 64")
            if self.truncation_radius is None:
                object.__setattr__(self, "truncation_radius", 1300.0 / self.alpha)
            if self.truncation_radius <= 0:
                raise ValueError("truncation_radius must be positive")

    @property
    def tail_mass_bound(self):
        """Upper bound on the shell mass beyond the truncation radius."""
        if self.kind != "bessel_mixture":
            return 0.0
        return 1.3 / (self.alpha * self.truncation_radius)

    def to_dict(self):
        out = asdict(self)
        out["tail_mass_bound"] = self.tail_mass_bound
        return out


@dataclass
class LabeledDataSet:
    X: np.ndarray
    y: np.ndarray
    norms: np.ndarray
    spec: DistributionSpec
    lam: float
    seed: int
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return self.X.shape[0]

    def metadata(self):
        return {
            "schema": CSV_SCHEMA,
            "spec": self.spec.to_dict(),
            "lambda": self.lam,
            "seed": self.seed,
            "n": len(self),
            "truncation_radius": self.spec.truncation_radius,
            "tail_mass_bound": self.spec.tail_mass_bound,
            **self.meta,
        }


def ball_labels(norms, lam):
    return (np.asarray(norms) <= lam).astype(np.int8)


def _make_dataset(X, spec, lam, seed, **meta):
    norms = np.linalg.norm(X, axis=1)
    return LabeledDataSet(X, ball_labels(norms, lam), norms, spec, float(lam), int(seed), meta)


def chunk_rng(seed, stream):
    """Generator for chunk ``stream`` of a sampler seeded with ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream),)))


def _chunks(n):
    for k, start in enumerate(range(0, n, CHUNK)):
        yield k, min(CHUNK, n - start)


def uniform_sphere(rng, n, d):
    g = rng.standard_normal((n, d))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# closed-form norm densities


def unit_ball_radius(d):
    """Radius of the unit-volume ball in ``R^d``."""
    if d < 1:
        raise ValueError("d must be >= 1")
    return math.exp(specfun.log_gamma(d / 2 + 1) / d) / math.sqrt(math.pi)


def _shell_scale(d, alpha):
    return 2 * math.pi * alpha * math.sqrt(d) * unit_ball_radius(d)


def shell_norm_density(x, d, alpha=1.0):
    """Norm density of the Bessel shell, ``(d/x) J_{d/2}(2 pi alpha sqrt(d) R_d x)^2``."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("shell_norm_density requires x > 0")
    j = specfun.bessel_j(d / 2, _shell_scale(d, alpha) * x)
    return d / x * np.square(j)


def chi_component_density(x, d):
    """Density of ``chi_d / sqrt(d)``, the norm of ``N(0, I/d)``."""
    if d < 2:
        raise ValueError("d must be >= 2")
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("chi_component_density requires x >= 0")
    logc = math.log(2) + (d / 2) * math.log(d / 2) - specfun.log_gamma(d / 2)
    with np.errstate(divide="ignore"):
        val = np.exp(logc + (d - 1) * np.log(x) - 0.5 * d * x * x)
    return specfun._out(np.where(x > 0, val, 0.0))


def chi_component_mode(d):
    return math.sqrt(1 - 1 / d)


def mixture_norm_density(x, spec):
    """Equal-weight mixture of the shell and Gaussian norm densities."""
    if spec.kind != "bessel_mixture":
        raise ValueError("mixture_norm_density needs a bessel_mixture spec")
    return 0.5 * shell_norm_density(x, spec.d, spec.alpha) + 0.5 * chi_component_density(x, spec.d)


def mixture_norm_cdf(x, spec):
    """``P[||X|| <= x]`` for the mixture, shell part from the tabulated CDF."""
    x = np.asarray(x, dtype=float)
    grid, cdf = _shell_table(spec.d, spec.alpha, spec.truncation_radius)
    shell = np.interp(x, grid, cdf, left=0.0, right=cdf[-1])
    gauss = specfun.reg_lower_gamma(spec.d / 2, spec.d * x * x / 2)
    return 0.5 * shell + 0.5 * gauss


def sphere_sum_norm_density(x, d):
    """Norm density of the sum of two independent uniform unit-sphere points."""
    if d < 3:
        raise ValueError("sphere_sum_norm_density requires d >= 3")
    x = np.asarray(x, dtype=float)
    logc = specfun.log_gamma(d / 2) - specfun.log_gamma((d - 1) / 2) - 0.5 * math.log(math.pi)
    inside = (x >= 0) & (x <= 2)
    xc = np.where(inside, x, 1.0)
    base = np.clip(1 - 0.25 * xc * xc, 0.0, None)
    val = math.exp(logc) * xc ** (d - 2) * base ** ((d - 3) / 2)
    return specfun._out(np.where(inside, val, 0.0))


# ---------------------------------------------------------------------------
# shell CDF tabulation

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


def _table_edges(d, alpha, radius):
    # fine uniform grid over the bulk, coarser beyond it
    scale = _shell_scale(d, alpha)
    period = 2 * math.pi / scale
    bulk = min(radius, max(20.0, 400 * period))
    n_fine = int(TABLE_POINTS * 0.75) if bulk < radius else TABLE_POINTS
    fine = np.linspace(0.0, bulk, n_fine)
    if bulk >= radius:
        return fine
    coarse = np.linspace(bulk, radius, TABLE_POINTS - n_fine + 1)[1:]
    return np.concatenate([fine, coarse])


@lru_cache(maxsize=32)
def _shell_table(d, alpha, radius):
    edges = _table_edges(d, alpha, radius)
    scale = _shell_scale(d, alpha)

    def dens(t):
        t = np.maximum(t, 1e-300)
        return d / t * np.square(specfun.bessel_j(d / 2, scale * t))

    # cells spanning several oscillations get one 16-point panel per half period
    width = np.diff(edges)
    sub = np.maximum(1, np.ceil(width * scale / math.pi)).astype(int)
    inc = np.empty(len(width))
    for k in np.unique(sub):
        idx = np.flatnonzero(sub == k)
        lo, hi = edges[idx], edges[idx + 1]
        fr = np.linspace(0, 1, k + 1)
        panels = lo[:, None] + (hi - lo)[:, None] * fr
        a, b = panels[:, :-1], panels[:, 1:]
        half = 0.5 * (b - a)
        pts = 0.5 * (a + b)[..., None] + half[..., None] * _GL_NODES
        inc[idx] = np.sum(half * (dens(pts) @ _GL_WEIGHTS), axis=1)
    cdf = np.concatenate([[0.0], np.cumsum(inc)])
    return edges, cdf


def shell_table(spec):
    """Grid and CDF values of the shell norm law on ``[0, truncation_radius]``.

    Raises
    ------
    TabulationError
        If the tabulated mass falls short of ``1 - tail_mass_bound``.
    """
    grid, cdf = _shell_table(spec.d, spec.alpha, spec.truncation_radius)
    if cdf[-1] < 1 - spec.tail_mass_bound - 1e-9 or not np.all(np.diff(cdf) >= 0):
        raise TabulationError(
            f"shell CDF reaches {cdf[-1]:.6f} < 1 - {spec.tail_mass_bound:.3g}"
        )
    return grid, cdf


def shell_norm_quantile(u, spec):
    """Inverse of the truncated shell CDF, linear between table nodes."""
    grid, cdf = shell_table(spec)
    return np.interp(np.asarray(u) * cdf[-1], cdf, grid)


# ---------------------------------------------------------------------------
# samplers


def sample_mixture(spec, n, lam, seed):
    """Draw ``n`` labeled points from the Bessel/Gaussian mixture."""
    if spec.kind != "bessel_mixture":
        raise ValueError("sample_mixture needs a bessel_mixture spec")
    if n < 0:
        raise ValueError("n must be non-negative")
    d = spec.d
    grid, cdf = shell_table(spec)
    parts = []
    for k, m in _chunks(n):
        rng = chunk_rng(seed, k)
        coin = rng.random(m) < 0.5
        gauss = rng.standard_normal((m, d)) / math.sqrt(d)
        radius = np.interp(rng.random(m) * cdf[-1], cdf, grid)
        shell = uniform_sphere(rng, m, d) * radius[:, None]
        parts.append(np.where(coin[:, None], shell, gauss))
    X = np.concatenate(parts) if parts else np.empty((0, d))
    return _make_dataset(X, spec, lam, seed, shell_mass_tabulated=float(cdf[-1]))


def sample_sphere_sum(d, n, lam, seed):
    """Draw ``n`` labeled points ``x1 + x2`` with ``x1, x2`` uniform on the unit sphere."""
    spec = DistributionSpec("sphere_sum", d)
    if n < 0:
        raise ValueError("n must be non-negative")
    parts = []
    for k, m in _chunks(n):
        rng = chunk_rng(seed, k)
        parts.append(uniform_sphere(rng, m, d) + uniform_sphere(rng, m, d))
    X = np.concatenate(parts) if parts else np.empty((0, d))
    return _make_dataset(X, spec, lam, seed)


def sample(spec, n, lam, seed):
    if spec.kind == "sphere_sum":
        return sample_sphere_sum(spec.d, n, lam, seed)
    return sample_mixture(spec, n, lam, seed)


def sample_on_sphere(d, n, radius, seed):
    """Points uniform on the radius-``radius`` sphere; exact conditioning on the norm."""
    rng = np.random.default_rng(seed)
    return uniform_sphere(rng, n, d) * radius


# ---------------------------------------------------------------------------
# targets


def oscillating_target(z, d, m):
    """``sign(sin(2 pi m sqrt(d) z^2))`` on ``z^2 in [2 - 1/sqrt(d), 2]``, zero elsewhere.

    ``sign(0)`` is taken as ``+1``.
    """
    if d < 4 or m < 1:
        raise ValueError("oscillating_target requires d >= 4 and m >= 1")
    z = np.asarray(z, dtype=float)
    z2 = z * z
    # compare z itself so that z = sqrt(2) is not lost to rounding in z^2
    support = (z >= math.sqrt(2 - 1 / math.sqrt(d))) & (z <= math.sqrt(2))
    s = np.sin(2 * math.pi * m * math.sqrt(d) * z2)
    val = np.where(s >= 0, 1.0, -1.0)
    return specfun._out(np.where(support, val, 0.0))


# ---------------------------------------------------------------------------
# persistence


def save_dataset(ds, path):
    """Write ``ds`` as CSV plus a ``.json`` sidecar with the metadata."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    d = ds.X.shape[1]
    with path.open("w", newline="") as fh:
        fh.write(f"# {CSV_SCHEMA}\n")
        w = csv.writer(fh)
        w.writerow([f"x_{k}" for k in range(d)] + ["norm", "y"])
        for row, nrm, lab in zip(ds.X, ds.norms, ds.y):
            w.writerow([repr(float(v)) for v in row] + [repr(float(nrm)), int(lab)])
    path.with_suffix(".json").write_text(json.dumps(ds.metadata(), indent=2, sort_keys=True))
    return path


def load_dataset(path):
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    with path.open() as fh:
        first = fh.readline()
        if not first.startswith("#"):
            raise ValueError("missing schema line")
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    d = len(header) - 2
    arr = np.array(body, dtype=float).reshape(-1, d + 2)
    sd = {k: meta["spec"][k] for k in ("kind", "d", "alpha", "truncation_radius")}
    spec = DistributionSpec(**sd)
    extra = {k: v for k, v in meta.items() if k not in ("schema", "spec", "lambda", "seed", "n",
                                                        "truncation_radius", "tail_mass_bound")}
    return LabeledDataSet(arr[:, :d], arr[:, -1].astype(np.int8), arr[:, d], spec,
                          meta["lambda"], meta["seed"], extra)
