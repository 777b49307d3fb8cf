"""Objectives, gradients and gradient-descent loops for both architectures.

The strong model is ``x -> crelu(w . erf(U x + b))`` with the hidden layer
frozen, so training only touches ``w`` and works on a precomputed feature
matrix. The baseline is a depth-2 network trained on all of its parameters.
"""

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import features as feat
from . import specfun

NU_DENOMINATOR = 840 * 9 ** 4 * 10 ** 6
PRACTICAL_ETA_SCALE = 1.9
STATIONARY_TOL = 1e-14
DIVERGENCE_LOSS = 1e6


class DivergenceError(RuntimeError):
    def __init__(self, msg, report=None):
        super().__init__(msg)
        self.report = report


class NonFiniteLossError(RuntimeError):
    pass


def crelu(z):
    """Clipped ReLU ``min(max(0, z), 1)``."""
    return specfun._out(np.clip(np.asarray(z, dtype=float), 0.0, 1.0))


def _check_dims(w, Xtilde, y):
    w = np.asarray(w)
    Xtilde = np.asarray(Xtilde)
    y = np.asarray(y)
    if Xtilde.ndim != 2 or w.shape != (Xtilde.shape[1],) or y.shape != (Xtilde.shape[0],):
        raise feat.DimensionMismatchError(
            f"w {w.shape}, Xtilde {Xtilde.shape}, y {y.shape} do not agree"
        )
    return w, Xtilde, y


def _margins(w, Xtilde):
    return Xtilde @ np.asarray(w, dtype=Xtilde.dtype)


def empirical_loss(w, Xtilde, y):
    """Mean of ``(crelu(w . x~_i) - y_i)^2``."""
    w, Xtilde, y = _check_dims(w, Xtilde, y)
    if Xtilde.shape[0] == 0:
        raise ValueError("empty data")
    m = _margins(w, Xtilde).astype(float)
    return float(np.mean(np.square(np.clip(m, 0.0, 1.0) - y)))


def rf_gradient(w, Xtilde, y):
    """Gradient of :func:`empirical_loss` with the open-interval indicator.

    Points whose margin is exactly 0 or 1 contribute nothing, so ``w = 0`` is
    a stationary point.
    """
    w, Xtilde, y = _check_dims(w, Xtilde, y)
    m = _margins(w, Xtilde).astype(float)
    active = (m > 0) & (m < 1)
    res = np.where(active, m - y, 0.0)
    return (2.0 / Xtilde.shape[0]) * (Xtilde.T @ res.astype(Xtilde.dtype)).astype(float)


def smoothness_probe(Xtilde, iters=30, seed=0, rows=None, start=None, return_vector=False):
    """Estimate ``2 * lambda_max(Xtilde^T Xtilde / n)`` by power iteration.

    This is the curvature of the unclipped squared loss, an upper bound on
    the curvature seen by the active rows. With ``rows`` only those rows
    enter the product (the normalisation stays ``1/n``), which gives the
    curvature of the loss restricted to the currently active points.
    ``start`` warm-starts the iteration.
    """
    n = Xtilde.shape[0]
    A = Xtilde if rows is None else Xtilde[rows]
    if start is None:
        v = np.random.default_rng(seed).standard_normal(Xtilde.shape[1]).astype(Xtilde.dtype)
    else:
        v = np.asarray(start, dtype=Xtilde.dtype)
    lam = 0.0
    for _ in range(iters):
        u = A.T @ (A @ v) / n
        lam = float(np.linalg.norm(u))
        if lam == 0.0:
            break
        v = u / lam
    return (2.0 * lam, v) if return_vector else 2.0 * lam


def technical_inequality(w, v, Xtilde, y):
    """Both sides of the gradient-alignment inequality and whether ``lhs >= rhs``.

    ``lhs = (1/n) sum (crelu(w.x) - crelu(v.x)) 1{w.x in (0,1)} (w.x - v.x)``
    ``rhs = (2/n) sum (crelu(v.x) - y) 1{w.x in (0,1)} (w.x - v.x)``
    """
    w, Xtilde, y = _check_dims(w, Xtilde, y)
    mw = _margins(w, Xtilde).astype(float)
    mv = _margins(v, Xtilde).astype(float)
    return _inequality_sides(mw, mv, y)


def _inequality_sides(mw, mv, y):
    ind = (mw > 0) & (mw < 1)
    diff = np.where(ind, mw - mv, 0.0)
    cv = np.clip(mv, 0.0, 1.0)
    n = mw.shape[0]
    lhs = float(np.sum((np.clip(mw, 0.0, 1.0) - cv) * diff) / n)
    rhs = float(2.0 * np.sum((cv - y) * diff) / n)
    return lhs >= rhs, lhs, rhs


def technical_inequality_holds(w, v, Xtilde, y):
    return technical_inequality(w, v, Xtilde, y)


# ---------------------------------------------------------------------------
# schedules


def nu_constant(C=1.0):
    return C / NU_DENOMINATOR


def theory_schedule(epsilon, delta, d=5, C=1.0, q_of_d=1.0, c1=1.0, c2=1.0, c=1.0,
                    desk_max_width=1e6):
    """Width, sample size, step bound and iteration count from the convergence guarantee.

    Every quantity is returned as a base-10 logarithm (``log10_*``) since
    they overflow double precision. ``c`` is the unspecified constant of the
    width and sample-size bounds, default 1; ``c1`` and ``c2`` are accepted
    for completeness but do not enter these formulas.
    """
    if not (0 < epsilon < 1 and 0 < delta < 1):
        raise ValueError("epsilon and delta must lie in (0, 1)")
    if min(d, C, q_of_d, c1, c2, c) <= 0:
        raise ValueError("all inputs must be positive")
    log10_floor = 4 * math.log10(12000)
    other = c * epsilon ** -5 * (q_of_d ** 4 + math.log(1 / delta) ** 2)
    log10_r = max(log10_floor, math.log10(other))
    ln_r = log10_r * math.log(10)
    log2_r = log10_r / math.log10(2)
    log10_n = math.log10(c) + 3 * log10_r + 2 * math.log10(log2_r)
    nu = nu_constant(C)
    log10_eta = math.log10(nu / 8) - log10_r
    # T = 2 / (eta nu) * ln(r / (8 eps)) at the step-size bound
    log10_T = math.log10(2) - log10_eta - math.log10(nu) + math.log10(ln_r - math.log(8 * epsilon))
    feasible = log10_r <= math.log10(desk_max_width)
    return {
        "log10_r": log10_r,
        "log10_n": log10_n,
        "log10_eta_max": log10_eta,
        "log10_T": log10_T,
        "nu": nu,
        "r_floor": 12000 ** 4,
        "feasible": feasible,
        "verdict": "feasible" if feasible else "infeasible at desk scale",
        "inputs": {"epsilon": epsilon, "delta": delta, "d": d, "C": C, "q_of_d": q_of_d,
                   "c1": c1, "c2": c2, "c": c},
    }


# ---------------------------------------------------------------------------
# fixed-feature gradient descent


@dataclass
class TrainConfig:
    """Settings for :func:`gd_fixed_features`.

    With ``schedule="practical"`` the step is ``eta`` if given, otherwise
    ``eta_scale / L`` with ``L`` from :func:`smoothness_probe`. When
    ``reprobe_every`` is positive (and ``eta`` is not given), ``L`` is
    re-estimated on the active rows every ``reprobe_every`` iterations with
    ``reprobe_iters`` warm-started power steps. With
    ``schedule="paper_theory"`` the step and budget come from
    :func:`theory_schedule`; the run is refused when that budget exceeds
    ``max_iters``.
    """

    eta: float | None = None
    max_iters: int = 200_000
    stop_loss: float = 0.0
    schedule: str = "practical"
    seed: int = 0
    monitor_inequality: bool = False
    reference_v: np.ndarray | None = None
    eta_scale: float = PRACTICAL_ETA_SCALE
    epsilon: float = 0.1
    delta: float = 0.1
    C: float = 1.0
    reprobe_every: int = 0
    reprobe_iters: int = 5

    def __post_init__(self):
        if self.schedule not in ("practical", "paper_theory"):
            raise ValueError(f"unknown schedule {self.schedule!r}")
        if self.eta is not None and self.eta < 0:
            raise ValueError("eta must be non-negative")
        if self.max_iters < 0 or self.stop_loss < 0:
            raise ValueError("max_iters and stop_loss must be non-negative")


@dataclass
class TrainReport:
    losses: np.ndarray
    grad_norms: np.ndarray
    dist_to_v: np.ndarray | None
    ineq_flags: np.ndarray | None
    w: np.ndarray
    stop_reason: str
    iterations: int
    eta: float
    seed: int
    wall_time: float
    risk: float | None = None
    risk_se: float | None = None
    extra: dict = field(default_factory=dict)

    def summary(self):
        return {
            "stop_reason": self.stop_reason,
            "iterations": self.iterations,
            "eta": self.eta,
            "seed": self.seed,
            "final_loss": float(self.losses[-1]) if len(self.losses) else None,
            "risk": self.risk,
            "risk_se": self.risk_se,
            "wall_time": self.wall_time,
            **{k: v for k, v in self.extra.items() if np.isscalar(v) or v is None},
        }


def gd_fixed_features(w0, Xtilde, y, config):
    """Full-batch gradient descent on the output weights.

    Iterates ``w <- w - eta * rf_gradient(w)`` until the empirical loss is at
    most ``config.stop_loss`` (``loss_target``), the gradient norm drops
    below 1e-14 (``stationary``) or ``max_iters`` steps have been taken
    (``iter_budget``).
    """
    w, Xtilde, y = _check_dims(np.array(w0, dtype=float), Xtilde, y)
    n = Xtilde.shape[0]
    if n == 0:
        raise ValueError("empty data")
    start = time.perf_counter()
    extra = {}
    max_iters = config.max_iters
    if config.schedule == "paper_theory":
        sched = theory_schedule(config.epsilon, config.delta, C=config.C)
        extra["theory"] = sched
        if sched["log10_T"] > math.log10(max(max_iters, 1)):
            return TrainReport(np.array([empirical_loss(w, Xtilde, y)]), np.array([np.nan]),
                               None, None, w, "refused", 0, 10 ** sched["log10_eta_max"],
                               config.seed, time.perf_counter() - start, extra=extra)
        eta = 10 ** sched["log10_eta_max"]
    elif config.eta is not None:
        eta = float(config.eta)
    else:
        L, pvec = smoothness_probe(Xtilde, seed=config.seed, return_vector=True)
        extra["smoothness"] = L
        eta = config.eta_scale / L
    adaptive = config.schedule == "practical" and config.eta is None and config.reprobe_every > 0
    etas = [eta]

    v = config.reference_v
    mv = None
    if v is not None:
        v = np.asarray(v, dtype=float)
        if config.monitor_inequality:
            mv = _margins(v, Xtilde).astype(float)
    yf = y.astype(float)
    losses, gnorms, dists, flags = [], [], [], []
    reason = "iter_budget"
    t = 0
    while True:
        m = _margins(w, Xtilde).astype(float)
        loss = float(np.mean(np.square(np.clip(m, 0.0, 1.0) - yf)))
        if not math.isfinite(loss):
            raise NonFiniteLossError(f"loss became {loss} at iteration {t}")
        active = (m > 0) & (m < 1)
        idx = np.flatnonzero(active)
        if adaptive and t > 0 and t % config.reprobe_every == 0 and idx.size:
            L, pvec = smoothness_probe(Xtilde, config.reprobe_iters, rows=idx, start=pvec,
                                       return_vector=True)
            if L > 0:
                eta = config.eta_scale / L
            etas.append(eta)
        res = m[idx] - yf[idx]
        if idx.size < n // 2:
            g = Xtilde[idx].T @ res.astype(Xtilde.dtype)
        else:
            full = np.zeros(n, dtype=Xtilde.dtype)
            full[idx] = res
            g = Xtilde.T @ full
        g = (2.0 / n) * g.astype(float)
        gn = float(np.linalg.norm(g))
        losses.append(loss)
        gnorms.append(gn)
        if v is not None:
            dists.append(float(np.linalg.norm(w - v)))
        if mv is not None:
            flags.append(_inequality_sides(m, mv, yf)[0])
        if loss <= config.stop_loss:
            reason = "loss_target"
            break
        if gn < STATIONARY_TOL:
            reason = "stationary"
            break
        if t >= max_iters:
            break
        w = w - eta * g
        t += 1
    return TrainReport(
        losses=np.array(losses),
        grad_norms=np.array(gnorms),
        dist_to_v=np.array(dists) if v is not None else None,
        ineq_flags=np.array(flags, dtype=bool) if mv is not None else None,
        w=w,
        stop_reason=reason,
        iterations=t,
        eta=eta,
        seed=config.seed,
        wall_time=time.perf_counter() - start,
        extra={**extra, "eta_trace": np.array(etas)} if adaptive else extra,
    )


def population_risk(layer, w, X, y, chunk=4096):
    """Squared-loss risk of ``crelu(w . erf(U x + b))`` on a held-out sample, with its SE."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    errs = np.empty(X.shape[0])
    for s in range(0, X.shape[0], chunk):
        F = feat.feature_map(layer, X[s:s + chunk])
        errs[s:s + chunk] = np.square(np.clip(F @ w, 0.0, 1.0) - y[s:s + chunk])
    return float(errs.mean()), float(errs.std(ddof=1) / math.sqrt(len(errs)))


# ---------------------------------------------------------------------------
# depth-2 baseline


def _softplus(z):
    return np.logaddexp(0.0, z)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


# value, derivative, (C_sigma, alpha_sigma) with |sigma(x)| <= C (1 + |x|^alpha)
ACTIVATIONS = {
    "erf": (specfun.erf, lambda z: 2.0 / math.sqrt(math.pi) * np.exp(-z * z), (1.0, 1.0)),
    "tanh": (np.tanh, lambda z: 1.0 - np.tanh(z) ** 2, (1.0, 1.0)),
    "softplus": (_softplus, _sigmoid, (1.0, 1.0)),
    "relu": (lambda z: np.maximum(z, 0.0), None, (1.0, 1.0)),
}


class GradientUnavailableError(ValueError):
    pass


@dataclass
class Depth2Params:
    U: np.ndarray
    w: np.ndarray
    b: np.ndarray
    b0: float
    activation: str = "erf"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        self.U = np.asarray(self.U, dtype=float)
        self.w = np.asarray(self.w, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        self.b0 = float(self.b0)

    @property
    def growth_constants(self):
        return ACTIVATIONS[self.activation][2]

    @property
    def r(self):
        return self.U.shape[0]

    @property
    def n_params(self):
        return self.U.size + self.w.size + self.b.size + 1

    def flat(self):
        return np.concatenate([self.U.ravel(), self.w, self.b, [self.b0]])

    @classmethod
    def from_flat(cls, theta, r, d, activation):
        theta = np.asarray(theta, dtype=float)
        k = r * d
        return cls(theta[:k].reshape(r, d), theta[k:k + r], theta[k + r:k + 2 * r],
                   theta[-1], activation)


def init_depth2(d, r, seed, activation="erf"):
    """Baseline initialization: ``U, b ~ N(0, 1/4)``, ``w ~ N(0, 1/r)``, ``b0 = 0``."""
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(3, r)))
    U = rng.normal(0.0, 0.5, size=(r, d))
    b = rng.normal(0.0, 0.5, size=r)
    w = rng.normal(0.0, 1.0 / math.sqrt(r), size=r)
    return Depth2Params(U, w, b, 0.0, activation)


def depth2_forward(theta, X):
    sigma = ACTIVATIONS[theta.activation][0]
    return sigma(X @ theta.U.T + theta.b) @ theta.w + theta.b0


def depth2_forward_loss_grad(theta, X, y, need_grad=True):
    """Squared loss ``mean((N(x_i) - y_i)^2)`` and its gradient in flat order ``(U, w, b, b0)``."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[1] != theta.U.shape[1] or y.shape != (X.shape[0],):
        raise feat.DimensionMismatchError("X, y and theta do not agree")
    sigma, dsigma, _ = ACTIVATIONS[theta.activation]
    if need_grad and dsigma is None:
        raise GradientUnavailableError(f"{theta.activation} has no gradient")
    n = X.shape[0]
    Z = X @ theta.U.T + theta.b
    S = sigma(Z)
    res = S @ theta.w + theta.b0 - y
    loss = float(np.mean(res * res))
    if not need_grad:
        return loss, None
    g = (2.0 / n) * res
    G = np.outer(g, theta.w) * dsigma(Z)
    grad = np.concatenate([(G.T @ X).ravel(), S.T @ g, G.sum(axis=0), [g.sum()]])
    return loss, grad


def depth2_smoothness_probe(theta, X, y, iters=20, h=1e-5, seed=0):
    """Largest Hessian eigenvalue magnitude at ``theta`` via finite-difference power iteration."""
    r, d, act = theta.r, theta.U.shape[1], theta.activation
    base = theta.flat()
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(base.size)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        gp = depth2_forward_loss_grad(Depth2Params.from_flat(base + h * v, r, d, act), X, y)[1]
        gm = depth2_forward_loss_grad(Depth2Params.from_flat(base - h * v, r, d, act), X, y)[1]
        hv = (gp - gm) / (2 * h)
        lam = float(np.linalg.norm(hv))
        if lam == 0:
            break
        v = hv / lam
    return lam


def _numpy_depth2_steps(theta0, X, y, eta, T, stop_loss):
    r, d, act = theta0.r, theta0.U.shape[1], theta0.activation
    theta = theta0.flat()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    losses, gnorms, pnorms = [], [], []
    t = 0
    while True:
        loss, grad = depth2_forward_loss_grad(Depth2Params.from_flat(theta, r, d, act), X, y)
        gn = float(np.linalg.norm(grad))
        losses.append(loss)
        gnorms.append(gn)
        pnorms.append(float(np.linalg.norm(theta)))
        if not math.isfinite(loss) or loss > DIVERGENCE_LOSS:
            return theta, losses, gnorms, pnorms, t, "divergent"
        if loss <= stop_loss:
            return theta, losses, gnorms, pnorms, t, "loss_target"
        if gn < STATIONARY_TOL:
            return theta, losses, gnorms, pnorms, t, "stationary"
        if t >= T:
            return theta, losses, gnorms, pnorms, t, "iter_budget"
        theta = theta - eta * grad
        t += 1


def _torch_depth2_steps(theta0, X, y, eta, T, stop_loss):
    # single-precision mirror of the numpy loop, for long sweeps
    import torch

    if theta0.activation != "erf":
        raise ValueError("the torch backend only implements the erf activation")
    dt = torch.float32
    Xt = torch.as_tensor(np.asarray(X, dtype=np.float32))
    yt = torch.as_tensor(np.asarray(y, dtype=np.float32))
    n = Xt.shape[0]
    U = torch.tensor(theta0.U, dtype=dt)
    w = torch.tensor(theta0.w, dtype=dt)
    b = torch.tensor(theta0.b, dtype=dt)
    b0 = torch.tensor(theta0.b0, dtype=dt)
    c = 2.0 / math.sqrt(math.pi)
    losses, gnorms, pnorms = [], [], []
    t = 0
    reason = "iter_budget"
    with torch.no_grad():
        while True:
            Z = torch.addmm(b, Xt, U.T)
            S = torch.erf(Z)
            res = S @ w + b0 - yt
            loss = float(res @ res) / n
            g = res * (2.0 / n)
            G = torch.exp(-Z * Z).mul_(c).mul_(w).mul_(g[:, None])
            gU, gw, gb, gb0 = G.T @ Xt, S.T @ g, G.sum(0), g.sum()
            gn = math.sqrt(float((gU * gU).sum() + gw @ gw + gb @ gb + gb0 * gb0))
            pn = math.sqrt(float((U * U).sum() + w @ w + b @ b + b0 * b0))
            losses.append(loss)
            gnorms.append(gn)
            pnorms.append(pn)
            if not math.isfinite(loss) or loss > DIVERGENCE_LOSS:
                reason = "divergent"
                break
            if loss <= stop_loss:
                reason = "loss_target"
                break
            if gn < STATIONARY_TOL:
                reason = "stationary"
                break
            if t >= T:
                break
            U -= eta * gU
            w -= eta * gw
            b -= eta * gb
            b0 -= eta * gb0
            t += 1
    theta = np.concatenate([U.double().numpy().ravel(), w.double().numpy(),
                            b.double().numpy(), [float(b0)]])
    return theta, losses, gnorms, pnorms, t, reason


def torch_available():
    try:
        import torch  # noqa: F401
    except ImportError:
        return False
    return True


def gd_full_depth2(theta0, X, y, eta, T, X_test=None, y_test=None, stop_loss=0.0,
                   backend="numpy"):
    """Full-parameter gradient descent on the depth-2 squared loss.

    Records the loss, gradient norm and parameter norm at every iterate.
    Raises :class:`DivergenceError` (carrying the partial report) if the loss
    exceeds 1e6.

    ``backend="numpy"`` runs in double precision through
    :func:`depth2_forward_loss_grad`. ``backend="torch"`` runs the same
    update in single precision with PyTorch (erf activation only), which is
    several times faster for long sweeps; ``"auto"`` picks torch when it is
    installed.
    """
    if backend == "auto":
        backend = "torch" if torch_available() and theta0.activation == "erf" else "numpy"
    if backend not in ("numpy", "torch"):
        raise ValueError(f"unknown backend {backend!r}")
    start = time.perf_counter()
    steps = _torch_depth2_steps if backend == "torch" else _numpy_depth2_steps
    theta, losses, gnorms, pnorms, t, reason = steps(theta0, X, y, eta, T, stop_loss)
    rep = _depth2_report(losses, gnorms, pnorms, theta, theta0, reason, t, eta, start)
    rep.extra["backend"] = backend
    if reason == "divergent":
        raise DivergenceError(f"loss {losses[-1]:.3g} at iteration {t}", rep)
    if X_test is not None:
        rep.risk, rep.risk_se = depth2_risk(theta, theta0, X_test, y_test)
    return rep


def depth2_risk(theta, theta0, X, y, chunk=8192):
    """Held-out squared loss of the flat depth-2 parameters ``theta``, with its SE."""
    params = Depth2Params.from_flat(theta, theta0.r, theta0.U.shape[1], theta0.activation)
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    err = np.empty(X.shape[0])
    for s in range(0, X.shape[0], chunk):
        err[s:s + chunk] = np.square(depth2_forward(params, X[s:s + chunk]) - y[s:s + chunk])
    return float(err.mean()), float(err.std(ddof=1) / math.sqrt(err.size))


def _depth2_report(losses, gnorms, pnorms, theta, theta0, reason, t, eta, start):
    moved = float(np.linalg.norm(theta - theta0.flat()))
    path = float(eta * np.sum(gnorms[:t]))
    return TrainReport(
        losses=np.array(losses), grad_norms=np.array(gnorms), dist_to_v=None, ineq_flags=None,
        w=theta, stop_reason=reason, iterations=t, eta=eta, seed=-1,
        wall_time=time.perf_counter() - start,
        extra={"param_norms": np.array(pnorms), "displacement": moved, "path_length": path,
               "n_params": theta.size, "width": theta0.r, "activation": theta0.activation},
    )


# ---------------------------------------------------------------------------
# step-size stability example


def stability_demo(eta, T, x0):
    """Gradient descent on ``x^2`` from ``x0``: ``x_{t+1} = (1 - 2 eta) x_t``, returns ``x_0..x_T``."""
    if T < 4:
        raise ValueError("T must be at least 4")
    xs = np.empty(T + 1)
    xs[0] = x0
    for t in range(T):
        xs[t + 1] = (1.0 - 2.0 * eta) * xs[t]
    return xs
