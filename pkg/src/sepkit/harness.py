"""Experiment orchestration and the ``sepkit`` command line.

Each experiment reads one JSON config, merges it over :data:`DEFAULTS`, and
writes into ``<out>/<experiment>-<hash>/`` where ``hash`` is taken from the
merged config. Result files hold only quantities that are a deterministic
function of the config; wall-clock times and the environment stamp go to a
separate ``environment.json``.
"""

import argparse
import copy
import csv
import hashlib
import json
import math
import platform
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import bounds as bnd
from . import distributions as dist
from . import features as feat
from . import training as trn
from . import verify_checks
from . import witness as wit

EXPERIMENTS = ("verify", "train", "separate", "sample", "bounds")
CSV_SCHEMA = "sepkit-result/1"

DEFAULTS = {
    "experiment": "verify",
    "distribution": {"kind": "sphere_sum", "d": 5, "alpha": 1.0, "truncation_radius": None},
    "lambda": 1.5,
    "n": 50_000,
    "n_test": 100_000,
    "model": {"r": 2048, "activation": "erf", "feature_dtype": "float32"},
    "train": {
        "eta": None,
        "eta_scale": trn.PRACTICAL_ETA_SCALE,
        "max_iters": 200_000,
        "stop_loss": 0.047,
        "schedule": "practical",
        "monitor_inequality": False,
        "witness_mode": "calibrated",
        "epsilon": 0.1,
        "delta": 0.1,
        "C": 1.0,
        "reprobe_every": 100,
        "reprobe_iters": 5,
    },
    "depth2": {"eta": None, "eta_scale": trn.PRACTICAL_ETA_SCALE, "budget_iters": None,
               "backend": "auto"},
    "sweep": {"widths": [8, 16, 32, 64, 128], "etas": [], "seeds": [0], "workers": 1},
    "verify": {"tolerances": {}, "only": []},
    "bounds": {
        "epsilon": 0.01, "delta": 0.1, "d": 5, "C": 1.0, "q_of_d": 1.0, "c1": 1.0, "c2": 1.0,
        "c": 1.0, "dims": [3, 5, 10, 20], "ms": [1, 2, 5, 10, 50], "r": 2048, "n": 50_000,
    },
    "seed": 0,
    "out": "results",
}


class ConfigError(ValueError):
    pass


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load_config(source, seed=None, out=None, experiment=None):
    """Merge a JSON config (path, dict or None) over the defaults and validate it."""
    if source is None:
        user = {}
    elif isinstance(source, dict):
        user = source
    else:
        user = json.loads(Path(source).read_text())
    cfg = _merge(DEFAULTS, user)
    if experiment is not None:
        cfg["experiment"] = experiment
    if seed is not None:
        cfg["seed"] = int(seed)
    if out is not None:
        cfg["out"] = str(out)
    validate_config(cfg)
    return cfg


def validate_config(cfg):
    if cfg["experiment"] not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {cfg['experiment']!r}")
    widths = cfg["sweep"]["widths"]
    if cfg["experiment"] == "separate" and not widths:
        raise ConfigError("separate needs a nonempty width sweep")
    if any(int(w) < 1 for w in widths):
        raise ConfigError("sweep widths must be positive")
    if not cfg["sweep"]["seeds"]:
        raise ConfigError("seed sweep must be nonempty")
    if int(cfg["sweep"]["workers"]) < 1:
        raise ConfigError("workers must be at least 1")
    if cfg["experiment"] in ("train", "separate", "sample") and int(cfg["n"]) < 1:
        raise ConfigError("n must be positive")
    if cfg["depth2"]["backend"] not in ("auto", "numpy", "torch"):
        raise ConfigError("depth2 backend must be auto, numpy or torch")
    if int(cfg["model"]["r"]) < 2:
        raise ConfigError("model width r must be at least 2")
    try:
        make_spec(cfg)
    except ValueError as err:
        raise ConfigError(str(err)) from err


def config_hash(cfg):
    """Hash of the fields that can change results; ``out`` and ``workers`` cannot."""
    key = copy.deepcopy(cfg)
    key.pop("out", None)
    key["sweep"].pop("workers", None)
    blob = json.dumps(key, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def make_spec(cfg):
    d = cfg["distribution"]
    return dist.DistributionSpec(d["kind"], int(d["d"]), float(d.get("alpha", 1.0)),
                                 d.get("truncation_radius"))


def point_seed(master, *index):
    """Seed for one sweep point, fixed by the master seed and the point's index."""
    ss = np.random.SeedSequence(int(master), spawn_key=tuple(int(i) for i in index))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


# ---------------------------------------------------------------------------
# result persistence


@dataclass
class ExperimentResult:
    experiment: str
    config: dict
    config_hash: str
    summary: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    files: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    out_dir: Path | None = None

    @property
    def failed(self):
        return any(not c["passed"] for c in self.checks)


def result_dir(cfg):
    path = Path(cfg["out"]) / f"{cfg['experiment']}-{config_hash(cfg)[:12]}"
    path.mkdir(parents=True, exist_ok=True)
    return path


def write_csv(path, header, rows):
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write(f"# {CSV_SCHEMA}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else repr(f)
    return obj


def finalize(result):
    out = result.out_dir
    summary = {
        "experiment": result.experiment,
        "config_hash": result.config_hash,
        "config": result.config,
        "summary": result.summary,
        "checks": result.checks,
        "files": sorted(result.files),
        "failed": result.failed,
    }
    (out / "summary.json").write_text(json.dumps(_jsonable(summary), indent=2, sort_keys=True) + "\n")
    env = {
        "version": __version__,
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "platform": platform.platform(),
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "timings": result.timings,
    }
    (out / "environment.json").write_text(json.dumps(_jsonable(env), indent=2, sort_keys=True) + "\n")
    return result


# ---------------------------------------------------------------------------
# experiments


def run_verify(cfg):
    """Run every registered property check; failures are recorded, not raised."""
    cfg = load_config(cfg, experiment="verify")
    res = ExperimentResult("verify", cfg, config_hash(cfg), out_dir=result_dir(cfg))
    tol = cfg["verify"]["tolerances"]
    only = set(cfg["verify"]["only"])
    rows = []
    for name, fn in verify_checks.CHECKS.items():
        if only and name not in only:
            continue
        t0 = time.perf_counter()
        outcome = fn(seed=point_seed(cfg["seed"], len(rows)), **tol.get(name, {}))
        res.timings[name] = time.perf_counter() - t0
        entry = {"name": name, **outcome}
        res.checks.append(entry)
        rows.append([name, entry["passed"], entry["measured"], entry["tolerance"], entry.get("detail", "")])
    write_csv(res.out_dir / "checks.csv", ["check", "passed", "measured", "tolerance", "detail"], rows)
    res.files.append("checks.csv")
    res.summary = {"n_checks": len(rows), "n_failed": sum(not c["passed"] for c in res.checks)}
    return finalize(res)


def _keyed_map(fn, jobs, workers):
    """Run ``fn(*args)`` for each ``(key, args)`` and return ``{key: result}``.

    With more than one worker the jobs go to a process pool; the merge is
    by key, so the outcome does not depend on completion order.
    """
    if workers <= 1 or len(jobs) <= 1:
        return {key: fn(*args) for key, args in jobs}
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = {key: pool.submit(fn, *args) for key, args in jobs}
        return {key: fut.result() for key, fut in futures.items()}


def _prepare_fixed_features(cfg, seed):
    spec = make_spec(cfg)
    lam = float(cfg["lambda"])
    r = int(cfg["model"]["r"])
    train = dist.sample(spec, int(cfg["n"]), lam, point_seed(seed, 0))
    test = dist.sample(spec, int(cfg["n_test"]), lam, point_seed(seed, 1))
    layer = feat.init_hidden(spec.d, r, point_seed(seed, 2))
    w0 = feat.init_output(r, point_seed(seed, 3))
    dtype = np.float32 if cfg["model"].get("feature_dtype", "float32") == "float32" else np.float64
    F = feat.feature_map(layer, train.X, dtype=dtype)
    return spec, lam, train, test, layer, w0, F


def train_strong(cfg, seed):
    """One fixed-feature run for ``seed``; returns the report and its layer."""
    spec, lam, train, test, layer, w0, F = _prepare_fixed_features(cfg, seed)
    tc = cfg["train"]
    v = None
    if tc["monitor_inequality"]:
        v = wit.build_witness(layer, w0, lam, tc["witness_mode"], n=len(train)).v
    config = trn.TrainConfig(
        eta=tc["eta"], max_iters=int(tc["max_iters"]), stop_loss=float(tc["stop_loss"]),
        schedule=tc["schedule"], seed=seed, monitor_inequality=bool(tc["monitor_inequality"]),
        reference_v=v, eta_scale=float(tc["eta_scale"]), epsilon=float(tc["epsilon"]),
        delta=float(tc["delta"]), C=float(tc["C"]), reprobe_every=int(tc["reprobe_every"]),
        reprobe_iters=int(tc["reprobe_iters"]),
    )
    rep = trn.gd_fixed_features(w0, F, train.y, config)
    del F
    if rep.stop_reason != "refused":
        rep.risk, rep.risk_se = trn.population_risk(layer, rep.w, test.X, test.y)
    return rep, (train, test, layer)


def _train_strong_report(cfg, seed):
    return train_strong(cfg, seed)[0]


def _trace_rows(rep):
    n = len(rep.losses)
    dist_v = rep.dist_to_v if rep.dist_to_v is not None else [None] * n
    flags = rep.ineq_flags if rep.ineq_flags is not None else [None] * n
    return [[t, rep.losses[t], rep.grad_norms[t], dist_v[t], flags[t]] for t in range(n)]


def run_train(cfg):
    """Fixed-feature GD for every seed in the sweep."""
    cfg = load_config(cfg, experiment="train")
    res = ExperimentResult("train", cfg, config_hash(cfg), out_dir=result_dir(cfg))
    runs = {}
    seeds = cfg["sweep"]["seeds"]
    jobs = [(k, (cfg, point_seed(cfg["seed"], k, int(s)))) for k, s in enumerate(seeds)]
    reports = _keyed_map(_train_strong_report, jobs, int(cfg["sweep"]["workers"]))
    for k, s in enumerate(seeds):
        rep = reports[k]
        name = f"trace_seed{s}.csv"
        write_csv(res.out_dir / name, ["iter", "loss", "grad_norm", "dist_to_v", "ineq_flag"], _trace_rows(rep))
        res.files.append(name)
        summ = rep.summary()
        res.timings[f"seed{s}"] = summ.pop("wall_time")
        summ.pop("smoothness", None)
        summ["smoothness"] = rep.extra.get("smoothness")
        if "theory" in rep.extra:
            summ["theory"] = rep.extra["theory"]
        runs[str(s)] = summ
    res.summary = {"runs": runs}
    return finalize(res)


def _depth2_eta(theta, X, y, dcfg, seed):
    if dcfg["eta"] is not None:
        return float(dcfg["eta"])
    L = trn.depth2_smoothness_probe(theta, X, y, seed=seed)
    return float(dcfg["eta_scale"]) / L


def separate_one(cfg, k, s, widths, strong=None):
    """Strong model plus budget-matched depth-2 sweep for one seed.

    ``strong`` may carry the ``(report, (train, test, layer))`` pair of a
    :func:`train_strong` run at this point's seed, which is then reused.
    """
    seed = point_seed(cfg["seed"], k, int(s))
    rep3, (train, test, layer) = strong if strong is not None else train_strong(cfg, seed)
    r = layer.r
    dcfg = cfg["depth2"]
    budget_iters = dcfg["budget_iters"] or rep3.iterations
    budget = int(budget_iters) * r
    X, y = train.X, train.y.astype(float)
    rows = [[s, "depth3", r, r, rep3.iterations, rep3.eta, rep3.losses[-1], rep3.risk,
             rep3.risk_se, rep3.stop_reason]]
    norms = {}
    for j, width in enumerate(widths):
        theta0 = trn.init_depth2(layer.d, int(width), point_seed(seed, 10, j),
                                 cfg["model"]["activation"])
        T = max(budget // theta0.n_params, 1)
        etas = cfg["sweep"]["etas"] or [None]
        for e in etas:
            eta = float(e) if e is not None else _depth2_eta(theta0, X, y, dcfg, point_seed(seed, 11, j))
            try:
                rep2 = trn.gd_full_depth2(theta0, X, y, eta, T, test.X, test.y,
                                          backend=dcfg["backend"])
                status = rep2.stop_reason
            except trn.DivergenceError as err:
                rep2, status = err.report, "divergent"
                rep2.risk, rep2.risk_se = math.inf, 0.0
            rows.append([s, "depth2", width, theta0.n_params, rep2.iterations, eta, rep2.losses[-1],
                         rep2.risk, rep2.risk_se, status])
            norms[(width, eta)] = rep2.extra["param_norms"]
    return rows, norms, rep3


def _timed_separate(cfg, k, s, widths):
    t0 = time.perf_counter()
    return (*separate_one(cfg, k, s, widths), time.perf_counter() - t0)


def run_separate(cfg):
    """Depth-3 fixed-feature run against budget-matched depth-2 runs, per seed."""
    cfg = load_config(cfg, experiment="separate")
    res = ExperimentResult("separate", cfg, config_hash(cfg), out_dir=result_dir(cfg))
    widths = [int(w) for w in cfg["sweep"]["widths"]]
    table, per_seed = [], {}
    seeds = cfg["sweep"]["seeds"]
    jobs = [(k, (cfg, k, s, widths)) for k, s in enumerate(seeds)]
    outcomes = _keyed_map(_timed_separate, jobs, int(cfg["sweep"]["workers"]))
    for k, s in enumerate(seeds):
        rows, norms, rep3, elapsed = outcomes[k]
        res.timings[f"seed{s}"] = elapsed
        table.extend(rows)
        d2 = [row[7] for row in rows if row[1] == "depth2"]
        best = {}
        for row in rows[1:]:
            best[row[2]] = min(best.get(row[2], math.inf), row[7])
        per_seed[str(s)] = {
            "depth3_risk": rep3.risk,
            "depth3_iterations": rep3.iterations,
            "depth2_best_risk_by_width": best,
            "min_depth2_risk": min(d2),
            "ratio": min(best.values()) / rep3.risk if rep3.risk else math.inf,
            "separated": all(v >= 2 * rep3.risk for v in best.values()),
        }
        name = f"param_norms_seed{s}.csv"
        norm_rows = []
        for (width, eta), traj in norms.items():
            step = max(len(traj) // 200, 1)
            norm_rows.extend([width, eta, t, traj[t]] for t in range(0, len(traj), step))
        write_csv(res.out_dir / name, ["width", "eta", "iter", "param_norm"], norm_rows)
        res.files.append(name)
    write_csv(res.out_dir / "separation.csv",
              ["seed", "model", "width", "n_params", "iterations", "eta", "final_loss", "risk",
               "risk_se", "status"], table)
    res.files.append("separation.csv")
    res.summary = {"per_seed": per_seed,
                   "seeds_separated": sum(v["separated"] for v in per_seed.values())}
    return finalize(res)


def run_sample(cfg):
    cfg = load_config(cfg, experiment="sample")
    res = ExperimentResult("sample", cfg, config_hash(cfg), out_dir=result_dir(cfg))
    spec = make_spec(cfg)
    for k, s in enumerate(cfg["sweep"]["seeds"]):
        ds = dist.sample(spec, int(cfg["n"]), float(cfg["lambda"]), point_seed(cfg["seed"], k, int(s)))
        name = f"data_seed{s}.csv"
        dist.save_dataset(ds, res.out_dir / name)
        res.files.extend([name, f"data_seed{s}.json"])
    res.summary = {"n": int(cfg["n"]), "spec": spec.to_dict()}
    return finalize(res)


def run_bounds(cfg):
    cfg = load_config(cfg, experiment="bounds")
    res = ExperimentResult("bounds", cfg, config_hash(cfg), out_dir=result_dir(cfg))
    b = cfg["bounds"]
    reports = []
    for d in b["dims"]:
        for m in b["ms"]:
            if d >= 3:
                reports.append(bnd.harmonic_dim_report(d, m))
            reports.append(bnd.sep_lower_bound_report(d, m, b["c1"], b["c2"]))
    gb = bnd.generalization_bound(b["r"], b["n"], b["delta"])
    reports.append(bnd.BoundReport("generalization_bound", {"r": b["r"], "n": b["n"], "delta": b["delta"]},
                                   gb, math.log10(gb), "uniform convergence over ||w|| <= 1"))
    lg = bnd.growth_bound_log(b["n"], b["r"], 1)
    reports.append(bnd.BoundReport("growth_bound", {"n": b["n"], "r": b["r"], "m": 1},
                                   math.exp(lg) if lg < 700 else math.inf, lg / math.log(10),
                                   "halfspace intersections"))
    if b["epsilon"] <= 1 / 400:
        m = bnd.accuracy_to_oscillation(b["epsilon"])
        reports.append(bnd.BoundReport("accuracy_to_oscillation", {"epsilon": b["epsilon"]}, m,
                                       math.log10(m) if m > 0 else -math.inf, "oscillation count"))
    sched = trn.theory_schedule(b["epsilon"], b["delta"], b["d"], b["C"], b["q_of_d"], b["c1"],
                                b["c2"], b["c"])
    for key in ("log10_r", "log10_n", "log10_eta_max", "log10_T"):
        lg10 = sched[key]
        reports.append(bnd.BoundReport(f"theory_{key[6:]}", {"epsilon": b["epsilon"], "delta": b["delta"]},
                                       10 ** lg10 if lg10 < 300 else math.inf, lg10, sched["verdict"]))
    reports.append(bnd.BoundReport("theory_nu", {"C": b["C"]}, sched["nu"], math.log10(sched["nu"]),
                                   sched["verdict"]))
    write_csv(res.out_dir / "bounds.csv", ["name", "value", "log10", "anchor", "inputs"],
              [rep.row() for rep in reports])
    res.files.append("bounds.csv")
    res.summary = {"theory_schedule": sched, "n_rows": len(reports)}
    return finalize(res)


RUNNERS = {
    "verify": run_verify,
    "train": run_train,
    "separate": run_separate,
    "sample": run_sample,
    "bounds": run_bounds,
}


def main(argv=None):
    parser = argparse.ArgumentParser(prog="sepkit", description=__doc__.splitlines()[0])
    parser.add_argument("experiment", choices=EXPERIMENTS)
    parser.add_argument("--config", required=True, help="JSON config file")
    parser.add_argument("--seed", type=int, default=None, help="override the master seed")
    parser.add_argument("--out", default=None, help="output directory")
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config, args.seed, args.out, args.experiment)
    except (ConfigError, OSError, json.JSONDecodeError) as err:
        print(f"sepkit: invalid config: {err}", file=sys.stderr)
        return 2
    result = RUNNERS[args.experiment](cfg)
    for c in result.checks:
        print(f"{'PASS' if c['passed'] else 'FAIL'}  {c['name']}  measured={c['measured']}  "
              f"tolerance={c['tolerance']}")
    print(f"results in {result.out_dir}")
    return 1 if result.failed else 0


if __name__ == "__main__":
    sys.exit(main())
