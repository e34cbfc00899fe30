"""Command-line front end.

Subcommands ``gen-data``, ``train``, ``eval``, ``sweep`` and ``profile``.
Experiments are described by one JSON file; see ``docs/config.md``.
"""
import argparse
import csv
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .baselines import METHODS, SgdConfig, run_proxsgd, run_sgd_family
from .datasets import MnistSpec, SyntheticSpec, gen_synthetic, load_mnist
from .inner_solver import InnerCaps, InnerSolverError
from .metrics import (MetricRow, accuracy, column_sparsity_ratio, feasibility_violations,
                      heldout_err_over_train_n, performance_profile, profile_table,
                      train_test_err)
from .network import DataBatch, HyperParams, NetworkShape, Params
from .outer_ialm import CSV_HEADER, IalmConfig, format_float, init_params, run_ialam

log = logging.getLogger("ialam")

SOLVERS = ("ialam",) + METHODS
SPARSITY_TOLS = (1e-2, 1e-3, 1e-4, 1e-5)
PROFILE_MEASURES = ("TrainErr", "TestErr")


class ConfigError(ValueError):
    def __init__(self, field_name, msg):
        super().__init__(f"config field '{field_name}': {msg}")
        self.field = field_name


@dataclass
class ExperimentConfig:
    dataset: dict
    dims: tuple
    model: dict
    solver: str = "ialam"
    ialam: dict = field(default_factory=dict)
    sgd: dict = field(default_factory=dict)
    outdir: str = "out"
    seeds: list = field(default_factory=lambda: [0])

    @property
    def N(self):
        return self.dataset["N"]

    def shape(self):
        return NetworkShape(self.dims, self.N)

    def hyperparams(self):
        shape = self.shape()
        hp = HyperParams.defaults(shape, alpha=self.model.get("alpha", 0.01))
        for name in ("lambda_w", "lambda_v", "tau1"):
            if self.model.get(name) is not None:
                setattr(hp, name, float(self.model[name]))
        if self.model.get("beta") is not None:
            hp.beta = np.atleast_1d(np.asarray(self.model["beta"], dtype=float))
        hp.__post_init__()
        return hp

    def ialam_config(self, theory_mode=False):
        kw = dict(self.ialam)
        caps = {k: kw.pop(k) for k in list(kw) if k in _CAPS_FIELDS}
        cfg = IalmConfig.theory_mode(**kw) if theory_mode else IalmConfig(**kw)
        cfg.caps = InnerCaps(**caps)
        return cfg

    def sgd_config(self, seed):
        return SgdConfig(method=self.solver, seed=seed, **self.sgd)


_CAPS_FIELDS = {f.name for f in fields(InnerCaps)}
_IALM_FIELDS = {f.name for f in fields(IalmConfig)} - {"caps"}
_SGD_FIELDS = {f.name for f in fields(SgdConfig)} - {"method", "seed"}


def _require(d, key, prefix):
    if key not in d:
        raise ConfigError(f"{prefix}{key}", "missing required field")
    return d[key]


def _check_keys(d, allowed, prefix):
    if not isinstance(d, dict):
        raise ConfigError(prefix.rstrip("."), "must be a JSON object")
    for k in d:
        if k not in allowed:
            raise ConfigError(f"{prefix}{k}", "unknown field")


def _positive_int(v, name):
    if not isinstance(v, int) or isinstance(v, bool) or v < 1:
        raise ConfigError(name, f"must be a positive integer, got {v!r}")
    return v


def parse_config(raw):
    """Validate a config dict and return an :class:`ExperimentConfig`.

    Raises
    ------
    ConfigError
        Naming the first offending field.
    """
    _check_keys(raw, {"dataset", "dims", "hidden", "model", "solver", "ialam", "sgd",
                      "outdir", "seeds"}, "")
    ds = dict(_require(raw, "dataset", ""))
    kind = _require(ds, "kind", "dataset.")
    if kind == "synthetic":
        _check_keys(ds, {"kind", "N", "eps_y", "teacher_scale", "seed"}, "dataset.")
        dims = _require(raw, "dims", "")
    elif kind == "mnist":
        _check_keys(ds, {"kind", "N", "N_test", "dir", "seed"}, "dataset.")
        hidden = raw.get("hidden", [100, 50])
        if not isinstance(hidden, list):
            raise ConfigError("hidden", "must be a list of layer widths")
        dims = raw.get("dims", [784] + list(hidden) + [10])
        if dims[0] != 784 or dims[-1] != 10:
            raise ConfigError("dims", "MNIST networks need dims[0]=784 and dims[-1]=10")
    else:
        raise ConfigError("dataset.kind", f"must be 'synthetic' or 'mnist', got {kind!r}")
    ds["N"] = _positive_int(_require(ds, "N", "dataset."), "dataset.N")
    if kind == "synthetic" and ds.get("eps_y", 0.05) < 0:
        raise ConfigError("dataset.eps_y", "must be nonnegative")
    if not isinstance(dims, list) or len(dims) < 2:
        raise ConfigError("dims", "must be a list of at least two layer widths")
    for i, d in enumerate(dims):
        _positive_int(d, f"dims[{i}]")
    model = raw.get("model", {}) or {}
    _check_keys(model, {"alpha", "lambda_w", "lambda_v", "beta", "tau1"}, "model.")
    alpha = model.get("alpha", 0.01)
    if not (isinstance(alpha, (int, float)) and 0 <= alpha < 1):
        raise ConfigError("model.alpha", f"must lie in [0, 1), got {alpha!r}")
    for name in ("lambda_w", "lambda_v", "tau1"):
        v = model.get(name)
        if v is not None and not (isinstance(v, (int, float)) and v > 0):
            raise ConfigError(f"model.{name}", f"must be positive, got {v!r}")
    beta = model.get("beta")
    if beta is not None:
        b = np.atleast_1d(np.asarray(beta, dtype=float))
        if np.any(b <= 0) or b.size not in (1, len(dims) - 1):
            raise ConfigError("model.beta", "must be positive, scalar or one entry per layer")
    solver = raw.get("solver", "ialam")
    if solver not in SOLVERS:
        raise ConfigError("solver", f"must be one of {SOLVERS}, got {solver!r}")
    ialam = raw.get("ialam", {}) or {}
    _check_keys(ialam, _IALM_FIELDS | _CAPS_FIELDS, "ialam.")
    sgd = raw.get("sgd", {}) or {}
    _check_keys(sgd, _SGD_FIELDS, "sgd.")
    seeds = raw.get("seeds", [0])
    if not isinstance(seeds, list) or not seeds:
        raise ConfigError("seeds", "must be a nonempty list of integers")
    for i, s in enumerate(seeds):
        if not isinstance(s, int) or isinstance(s, bool) or s < 0:
            raise ConfigError(f"seeds[{i}]", f"must be a nonnegative integer, got {s!r}")
    cfg = ExperimentConfig(ds, tuple(dims), model, solver, ialam, sgd,
                           raw.get("outdir", "out"), seeds)
    # module-level invariants
    try:
        cfg.hyperparams()
    except ValueError as exc:
        raise ConfigError("model", str(exc)) from None
    try:
        cfg.ialam_config().resolved(cfg.shape())
    except (ValueError, TypeError) as exc:
        raise ConfigError("ialam", str(exc)) from None
    if solver != "ialam":
        try:
            cfg.sgd_config(0).resolved(cfg.N)
        except (ValueError, TypeError) as exc:
            raise ConfigError("sgd", str(exc)) from None
    return cfg


def load_config(path):
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"invalid JSON: {exc}") from None
    return parse_config(raw)


def mnist_dir(cfg, override=None):
    d = override or os.environ.get("IALAM_MNIST_DIR") or cfg.dataset.get("dir")
    if not d:
        raise ConfigError("dataset.dir", "no MNIST directory (use --mnist-dir or IALAM_MNIST_DIR)")
    return d


def load_data(cfg, seed, mnist_override=None):
    """Training and test batches for one seed (dataset.seed wins if given)."""
    ds = cfg.dataset
    data_seed = ds.get("seed", seed)
    if ds["kind"] == "synthetic":
        spec = SyntheticSpec(cfg.shape(), ds.get("eps_y", 0.05), data_seed,
                             ds.get("teacher_scale", 1.0), cfg.model.get("alpha", 0.01))
        tr, te, _ = gen_synthetic(spec)
        return tr, te
    spec = MnistSpec.from_dir(mnist_dir(cfg, mnist_override), ds["N"], data_seed, ds.get("N_test"))
    return load_mnist(spec)


def metric_row(params, hp, train, test, aux=None, kkt=float("nan")):
    tr, te = train_test_err(params, train, test, hp)
    row = MetricRow(TrainErr=tr, TestErr=te, KKTVi=kkt,
                    TestErr_paperN=heldout_err_over_train_n(params, train, test, hp))
    if train.Y.shape[0] > 1:
        row.Accuracy = accuracy(params, train, hp)
        row.TestAcc = accuracy(params, test, hp)
    if aux is not None:
        row.FeasVi1, row.FeasVi2, row.FeasVi = feasibility_violations(params, aux, train, hp)
    row.sparsity = {format_float(t): column_sparsity_ratio(params, t) for t in SPARSITY_TOLS}
    return row


def _baseline_rows(records):
    out = []
    for r in records:
        vals = dict.fromkeys(CSV_HEADER, "")
        vals.update(k=str(r.epoch), O=format_float(r.O), TrainErr=format_float(r.TrainErr),
                    TestErr=format_float(r.TestErr))
        out.append([vals[h] for h in CSV_HEADER])
    return out


def save_params(path, params):
    arrays = {f"W{l + 1}": W for l, W in enumerate(params.weights)}
    arrays.update({f"b{l + 1}": b for l, b in enumerate(params.biases)})
    np.savez(path, **arrays)


def load_params(path):
    with np.load(path) as z:
        L = sum(1 for k in z.files if k.startswith("W"))
        return Params([z[f"W{l}"] for l in range(1, L + 1)], [z[f"b{l}"] for l in range(1, L + 1)])


def run_one(cfg, seed, outdir, theory_mode=False, mnist_override=None, record_wall_time=False):
    """Train once and write ``run_<seed>.csv``, ``params_<seed>.npz`` and a
    per-run summary. Returns the summary dict."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    train, test = load_data(cfg, seed, mnist_override)
    hp = cfg.hyperparams()
    shape = cfg.shape()
    t0 = time.perf_counter()
    summary = dict(seed=seed, solver=cfg.solver, status="ok")
    if cfg.solver == "ialam":
        icfg = cfg.ialam_config(theory_mode)
        icfg.record_wall_time = record_wall_time
        res = run_ialam(train, hp, icfg, seed, dims=shape.dims, test_batch=test)
        rows = [r.csv_row(record_wall_time) for r in res.records]
        last = res.records[-1]
        row = metric_row(res.params, hp, train, test, res.aux, last.KKTVi)
        params = res.params
        summary.update(iterations=len(res.records), stop_reason=res.stop_reason,
                       descent_violations=sum(r.descent_violations for r in res.records))
    else:
        scfg = cfg.sgd_config(seed)
        p0 = init_params(shape, seed)
        runner = run_proxsgd if cfg.solver == "proxsgd" else run_sgd_family
        params, records = runner(train, hp, scfg, p0, test)
        rows = _baseline_rows(records)
        row = metric_row(params, hp, train, test)
        diverged = bool(records and records[-1].diverged)
        summary.update(iterations=len(records), diverged=diverged)
        if diverged:
            summary["status"] = "diverged"
    summary["wall_time_s"] = time.perf_counter() - t0
    summary["metrics"] = asdict(row)
    with open(outdir / f"run_{seed}.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        w.writerows(rows)
    save_params(outdir / f"params_{seed}.npz", params)
    return summary


def _dump_json(obj, path):
    def default(o):
        if isinstance(o, (np.floating, np.integer)):
            return o.item()
        raise TypeError(type(o))
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=default)
        fh.write("\n")


def _outdir(args, cfg):
    return Path(args.outdir or cfg.outdir)


def cmd_train(args):
    cfg = load_config(args.config)
    seed = args.seed if args.seed is not None else cfg.seeds[0]
    outdir = _outdir(args, cfg)
    try:
        summary = run_one(cfg, seed, outdir, args.theory_mode, args.mnist_dir)
    except (InnerSolverError, FloatingPointError) as exc:
        log.error("solver failure: %s", exc)
        return 1
    _dump_json(summary, outdir / "summary.json")
    log.info("wrote %s", outdir / f"run_{seed}.csv")
    return 1 if summary["status"] != "ok" else 0


def cmd_gen_data(args):
    cfg = load_config(args.config)
    seed = args.seed if args.seed is not None else cfg.seeds[0]
    train, test = load_data(cfg, seed, args.mnist_dir)
    outdir = _outdir(args, cfg)
    outdir.mkdir(parents=True, exist_ok=True)
    path = outdir / f"data_{seed}.npz"
    np.savez(path, X=train.X, Y=train.Y, X_test=test.X, Y_test=test.Y)
    print(path)
    return 0


def cmd_eval(args):
    cfg = load_config(args.config)
    seed = args.seed if args.seed is not None else cfg.seeds[0]
    outdir = _outdir(args, cfg)
    ppath = Path(args.params) if args.params else outdir / f"params_{seed}.npz"
    if not ppath.exists():
        log.error("no parameter file %s", ppath)
        return 2
    params = load_params(ppath)
    try:
        params.check(cfg.shape())
    except ValueError as exc:
        log.error("%s", exc)
        return 2
    train, test = load_data(cfg, seed, args.mnist_dir)
    row = metric_row(params, cfg.hyperparams(), train, test)
    out = asdict(row)
    _dump_json(out, outdir / f"eval_{seed}.json")
    json.dump(out, sys.stdout, indent=2, sort_keys=True, default=float)
    print()
    return 0


def _sweep_worker(job):
    cfg, seed, outdir, theory_mode, mnist_override = job
    try:
        return run_one(cfg, seed, outdir, theory_mode, mnist_override)
    except Exception as exc:  # recorded, the sweep goes on
        return dict(seed=seed, solver=cfg.solver, status="failed", error=repr(exc))


def aggregate(summaries):
    """Per-metric mean, std, min and max over the successful runs."""
    ok = [s for s in summaries if s.get("status") == "ok"]
    keys = [k for k in ("TrainErr", "TestErr", "Accuracy", "TestAcc", "FeasVi1", "FeasVi2",
                        "FeasVi", "KKTVi")]
    out = {}
    for k in keys:
        vals = np.array([s["metrics"][k] for s in ok], dtype=float)
        vals = vals[np.isfinite(vals)]
        if vals.size == 0:
            continue
        mean, std = float(vals.mean()), float(vals.std())
        lo, hi = float(vals.min()), float(vals.max())
        out[k] = dict(mean=mean, std=std, min=lo, max=hi,
                      text=f"{mean:.3e}±{std:.1e} [{lo:.3e},{hi:.3e}]")
    it = np.array([s["iterations"] for s in ok], dtype=float)
    if it.size:
        out["iterations"] = dict(mean=float(it.mean()), std=float(it.std()),
                                 min=float(it.min()), max=float(it.max()))
    return out


def cmd_sweep(args):
    cfg = load_config(args.config)
    seeds = args.seeds if args.seeds else cfg.seeds
    outdir = _outdir(args, cfg)
    jobs = [(cfg, s, outdir, args.theory_mode, args.mnist_dir) for s in seeds]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            summaries = list(pool.map(_sweep_worker, jobs))  # ordered by seed
    else:
        summaries = [_sweep_worker(j) for j in jobs]
    outdir.mkdir(parents=True, exist_ok=True)
    failed = [s["seed"] for s in summaries if s["status"] != "ok"]
    result = dict(solver=cfg.solver, seeds=list(seeds), failed=failed,
                  summary=aggregate(summaries), runs=summaries)
    _dump_json(result, outdir / "sweep_summary.json")
    with open(outdir / "sweep_summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric", "mean", "std", "min", "max"])
        for k, v in result["summary"].items():
            w.writerow([k] + [format_float(v[x]) for x in ("mean", "std", "min", "max")])
    if failed:
        log.error("%d run(s) failed: seeds %s", len(failed), failed)
        return 1
    return 0


def read_solver_results(path, measure):
    """``problem -> value`` from a ``problem,TrainErr,TestErr,status`` file;
    failed runs map to ``None``."""
    out = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"problem", measure, "status"} - set(reader.fieldnames or ())
        if missing:
            raise ConfigError(str(path), f"missing columns {sorted(missing)}")
        for row in reader:
            val = row[measure].strip()
            failed = row["status"].strip() != "ok" or val == ""
            out[row["problem"]] = None if failed else float(val)
    return out


def cmd_profile(args):
    rdir = Path(args.results_dir)
    if args.solvers:
        files = [rdir / f"{s}.csv" for s in args.solvers]
    else:
        files = sorted(p for p in rdir.glob("*.csv") if not p.name.startswith("profile"))
    missing = [str(f) for f in files if not f.exists()]
    if missing:
        log.error("missing solver result file(s): %s", ", ".join(missing))
        return 2
    if len(files) < 2:
        log.error("need at least two solver result files in %s", rdir)
        return 2
    try:
        tables = {f.stem: read_solver_results(f, args.measure) for f in files}
    except ConfigError as exc:
        log.error("%s", exc)
        return 2
    problems = sorted(next(iter(tables.values())))
    for s, t in tables.items():
        if sorted(t) != problems:
            log.error("solver %s covers a different problem set", s)
            return 2
    if not problems:
        log.error("empty problem set")
        return 2
    results = {s: [t[p] for p in problems] for s, t in tables.items()}
    names, rows = profile_table(performance_profile(results))
    out = Path(args.output) if args.output else rdir / f"profile_{args.measure}.csv"
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["omega"] + names)
        for r in rows:
            w.writerow([format_float(x) for x in r])
    print(out)
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="ialam", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seeds=False):
        sp.add_argument("--config", required=True)
        sp.add_argument("--outdir")
        sp.add_argument("--mnist-dir")
        if seeds:
            sp.add_argument("--seeds", type=int, nargs="+")
        else:
            sp.add_argument("--seed", type=int)

    sp = sub.add_parser("gen-data", help="write the dataset of a config to npz")
    common(sp)
    sp.set_defaults(func=cmd_gen_data)
    sp = sub.add_parser("train", help="train once")
    common(sp)
    sp.add_argument("--theory-mode", action="store_true", help="eta3 = 1.01")
    sp.set_defaults(func=cmd_train)
    sp = sub.add_parser("eval", help="evaluate saved parameters")
    common(sp)
    sp.add_argument("--params")
    sp.set_defaults(func=cmd_eval)
    sp = sub.add_parser("sweep", help="train over several seeds and aggregate")
    common(sp, seeds=True)
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--theory-mode", action="store_true")
    sp.set_defaults(func=cmd_sweep)
    sp = sub.add_parser("profile", help="performance profile from per-solver CSVs")
    sp.add_argument("--results-dir", required=True)
    sp.add_argument("--measure", choices=PROFILE_MEASURES, default="TrainErr")
    sp.add_argument("--solvers", nargs="+")
    sp.add_argument("--output")
    sp.set_defaults(func=cmd_profile)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
