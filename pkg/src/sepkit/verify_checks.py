"""Property checks run by ``sepkit verify``.

Every check takes a ``seed`` plus optional overrides of its tolerance and
sample size, and returns ``{"passed", "measured", "tolerance", "detail"}``.
Oracles here are independent of the code under test: quadrature of defining
integrals, finite differences, direct recursion or Monte Carlo.
"""

import math
import warnings

import numpy as np
from scipy import integrate, stats

from . import bounds as bnd
from . import distributions as dist
from . import features as feat
from . import specfun
from . import training as trn
from . import witness as wit

CHECKS = {}


def check(fn):
    CHECKS[fn.__name__] = fn
    return fn


def _out(passed, measured, tolerance, detail=""):
    return {"passed": bool(passed), "measured": float(measured), "tolerance": float(tolerance),
            "detail": detail}


@check
def owen_sandwich(seed=0, slack=1e-10):
    worst = math.inf
    for h in np.arange(0, 3.0001, 0.25):
        for a in np.arange(0, 5.0001, 0.25):
            t = specfun.owen_t(h, a)
            lo = math.exp(-h * h * (1 + a * a) / 2) * math.atan(a) / (2 * math.pi)
            hi = math.exp(-h * h / 2) * math.atan(a) / (2 * math.pi)
            worst = min(worst, t - lo, hi - t)
    return _out(worst >= -slack, worst, slack, "min margin over 13x21 grid, may dip to -slack")


@check
def normal_cdf_identity(seed=0, tol=1e-8):
    worst = 0.0
    for c in (-2.0, 0.0, 1.0):
        for dd in (0.5, 1.0, 3.0):
            val, _ = integrate.quad(lambda z: stats.norm.cdf(c + dd * z) * stats.norm.pdf(z),
                                    -np.inf, np.inf, epsabs=1e-13)
            closed = 0.5 * (1 + specfun.erf(c / math.sqrt(1 + dd * dd) / math.sqrt(2)))
            worst = max(worst, abs(val - closed))
    return _out(worst <= tol, worst, tol)


@check
def erf_round_trip(seed=0, tol=1e-10):
    p = np.concatenate([-np.logspace(-12, np.log10(1 - 1e-6), 200), np.logspace(-12, np.log10(1 - 1e-6), 200)])
    err = np.max(np.abs(specfun.erf(specfun.erf_inv(p)) - p) / np.maximum(np.abs(p), 1e-300))
    return _out(err <= tol, err, tol, "max relative error")


def _bessel_integral(nu, x):
    # Poisson integral representation, valid for nu > -1/2
    f = lambda t: (1 - t * t) ** (nu - 0.5) * math.cos(x * t)  # noqa: E731
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, _ = integrate.quad(f, -1, 1, limit=400, epsabs=1e-14, epsrel=1e-13)
    return (x / 2) ** nu / (math.sqrt(math.pi) * math.gamma(nu + 0.5)) * val


@check
def bessel_oracle(seed=0, tol=1e-9):
    worst = 0.0
    for nu in (0.5, 1.0, 2.5, 10.0):
        for x in (0.1, 1.0, 10.0, 50.0):
            worst = max(worst, abs(specfun.bessel_j(nu, x) - _bessel_integral(nu, x)))
    return _out(worst <= tol, worst, tol)


@check
def densities_integrate_to_one(seed=0, tol=1e-6):
    errs = []
    for d in (2, 3, 5, 10):
        val, _ = integrate.quad(lambda x: dist.chi_component_density(x, d), 0, np.inf)
        errs.append(abs(val - 1))
    for d in (3, 4, 10):
        val, _ = integrate.quad(lambda x: dist.sphere_sum_norm_density(x, d), 0, 2)
        errs.append(abs(val - 1))
    worst = max(errs)
    spec = dist.DistributionSpec("bessel_mixture", 5)
    _, cdf = dist.shell_table(spec)
    shell_gap = 1 - cdf[-1]
    ok = worst <= tol and 0 <= shell_gap <= spec.tail_mass_bound
    return _out(ok, worst, tol, f"shell mass beyond table {shell_gap:.3g} <= {spec.tail_mass_bound:.3g}")


@check
def sampler_determinism(seed=0, n=70_000):
    spec = dist.DistributionSpec("bessel_mixture", 4)
    a = dist.sample(spec, n, 1.5, seed)
    b = dist.sample(spec, n, 1.5, seed)
    c = dist.sample_sphere_sum(4, n, 1.5, seed)
    d = dist.sample_sphere_sum(4, n, 1.5, seed)
    same = np.array_equal(a.X, b.X) and np.array_equal(c.X, d.X)
    return _out(same, float(same), 1.0, "bitwise equality of two draws")


@check
def labels_recomputable(seed=0, n=50_000):
    ds = dist.sample(dist.DistributionSpec("bessel_mixture", 3), n, 1.2, seed)
    norms = np.linalg.norm(ds.X, axis=1)
    ok = np.array_equal(ds.y, (norms <= 1.2).astype(np.int8))
    rel = float(np.max(np.abs(norms - ds.norms) / np.maximum(norms, 1e-300)))
    return _out(ok and rel <= 1e-12, rel, 1e-12, "labels equal 1{||x|| <= lambda}")


@check
def sphere_sum_zero_mean(seed=0, n=1_000_000, d=5):
    ds = dist.sample_sphere_sum(d, n, 1.5, seed)
    m = float(np.linalg.norm(ds.X.mean(axis=0)))
    tol = 4 / math.sqrt(n) * math.sqrt(d)
    return _out(m < tol, m, tol)


@check
def preactivation_variance(seed=0, n=100_000, d=5):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for x in (0.5, 1.0, 2.0):
        xv = np.zeros(d)
        xv[0] = x
        U = rng.normal(0, 0.5, (n, d))
        B = rng.normal(0, 0.5, n)
        s = U @ xv + B
        var = s.var(ddof=1)
        target = float(feat.preactivation_variance(x))
        se = target * math.sqrt(2 / (n - 1))
        worst = max(worst, abs(var - target) / se)
    return _out(worst <= 5, worst, 5, "max |var - 0.25(1+x^2)| in standard errors")


@check
def feature_independence(seed=0, n=100_000, d=5, k=4):
    # fresh neurons for every sample, input of fixed norm
    rng = np.random.default_rng(seed)
    worst = 0.0
    for x in (0.5, 1.3, 2.0):
        xv = dist.sample_on_sphere(d, 1, x, seed)[0]
        U = rng.normal(0, 0.5, (n, k, d))
        B = rng.normal(0, 0.5, (n, k))
        F = specfun.erf(U @ xv + B)
        C = np.corrcoef(F.T)
        worst = max(worst, float(np.abs(C[np.triu_indices(k, 1)]).max() * math.sqrt(n)))
    return _out(worst <= 5, worst, 5, "max pairwise correlation in SE units")


@check
def density_monotone_in_norm(seed=0, tol=1e-12):
    xs = np.linspace(0, 5, 100)
    zs = np.linspace(-1 / 9, 1 / 9, 100)
    g = feat.conditional_feature_density(zs[None, :], xs[:, None])
    worst = float(np.max(np.diff(g, axis=0)))
    return _out(worst <= tol, worst, tol, "largest forward difference in x")


@check
def owen_term_range(seed=0):
    z = np.linspace(0, 50, 2001)
    a = np.asarray(wit.arctan_term(z))
    b = np.asarray(wit.owen_term(z))
    xis = np.linspace(wit.XI_LOW, wit.XI_HIGH, 12)
    lo = min(a.min(), xis[0] * b.min())
    hi = max(a.max(), xis[-1] * b.max())
    return _out(lo >= 0 and hi <= 0.5, hi, 0.5, f"min {lo:.3g}")


@check
def f_xi_monotone_branches(seed=0):
    bad = 0
    for xi in np.linspace(wit.XI_LOW, wit.XI_HIGH, 5):
        zs = wit.f_xi_argmin(xi)
        left = np.asarray(wit.f_xi_derivative(np.linspace(1e-3, zs, 1000)[:-1], xi))
        right = np.asarray(wit.f_xi_derivative(np.linspace(zs, 200, 1000)[1:], xi))
        bad += int(np.sum(left >= 0) + np.sum(right <= 0))
    return _out(bad == 0, bad, 0, "derivative sign violations")


@check
def f_xi_slope_floor(seed=0, floor=1 / 600):
    z = np.linspace(0.9, 2.1, 500)
    low = min(float(np.min(np.abs(wit.f_xi_derivative(z, xi)))) for xi in (0.45, 0.461, 0.472))
    return _out(low >= floor, low, floor)


@check
def f_xi_boundary_values(seed=0):
    xis = np.linspace(wit.XI_LOW, wit.XI_HIGH, 12)
    a = min(wit.f_xi(0.9, xi) for xi in xis)
    b = max(wit.f_xi(2.05, xi) for xi in xis)
    ok = a >= 1 / 6000 and b <= -1 / 12000
    return _out(ok, min(a - 1 / 6000, -1 / 12000 - b), 0.0, f"f(0.9)>={a:.3g}, f(2.05)<={b:.3g}")


@check
def witness_sign_behavior(seed=0, r=4096, d=5, lam=1.5, n=20_000, target=0.9):
    layer = feat.init_hidden(d, r, seed)
    cert = wit.build_witness(layer, feat.init_output(r, seed), lam, "calibrated")
    ds = dist.sample_sphere_sum(d, n, lam, seed + 1)
    keep = np.abs(ds.norms - lam) > 0.2
    F = feat.feature_map(layer, ds.X[keep], dtype=np.float32)
    acc = float(np.mean(wit.witness_predict(cert, F) == ds.y[keep]))
    return _out(acc >= target, acc, target, "accuracy of 1{v.x > 0} off the boundary band")


@check
def gradient_norm_cap(seed=0, trials=50):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        r = int(rng.integers(1, 200))
        n = int(rng.integers(1, 300))
        F = np.tanh(rng.normal(size=(n, r)) * 3)
        y = rng.integers(0, 2, n).astype(float)
        w = rng.normal(size=r) * rng.choice([0.01, 0.1, 1.0])
        g = trn.rf_gradient(w, F, y)
        worst = max(worst, np.linalg.norm(g) / (2 * math.sqrt(r)))
    return _out(worst <= 1, worst, 1.0, "max ||grad|| / (2 sqrt r)")


@check
def stability_closed_form(seed=0, tol=1e-12):
    worst = 0.0
    for T in (4, 8, 16, 64):
        for eta in (1 - 1 / T + 1e-6, 0.9, 0.99):
            xs = trn.stability_demo(eta, T, 1.0)
            closed = (1 - 2 * eta) ** np.arange(T + 1)
            worst = max(worst, float(np.max(np.abs(xs - closed))))
    return _out(worst <= tol, worst, tol)


@check
def harmonic_recurrence(seed=0):
    bad = 0
    for d in range(3, 21):
        for m in range(2, 21):
            lhs = bnd.harmonic_dim(d, m) * (2 * m + d - 4) * m
            rhs = bnd.harmonic_dim(d, m - 1) * (2 * m + d - 2) * (m + d - 3)
            bad += lhs != rhs
    return _out(bad == 0, bad, 0, "recurrence mismatches on d<=20, m<=20")


@check
def sep_bound_branches_cross(seed=0):
    bad = 0
    for d in range(1, 40):
        m = d
        bad += not math.isclose(m * math.log(d / m + 2), d * math.log(m / d + 2))
        for k in range(1, 40):
            a, b = k * math.log(d / k + 2), d * math.log(k / d + 2)
            if k < d and not a < b or k > d and not a > b:
                bad += 1
    return _out(bad == 0, bad, 0, "branch ordering violations")


@check
def special_gamma_sanity(seed=0):
    x = np.linspace(0.05, 100, 400)
    ref = np.array([math.lgamma(v) for v in x])
    err = float(np.max(np.abs(specfun.log_gamma(x) - ref)))
    ok = err <= 1e-10 and all(specfun.reg_lower_gamma(d / 2, d / 2) > 0.5 for d in range(2, 65))
    return _out(ok, err, 1e-10, "|log_gamma - lgamma| and P(d/2,d/2) > 1/2")
