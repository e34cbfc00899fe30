"""Outer inexact augmented Lagrangian loop."""
import csv
import io
import logging
import math
import time
from dataclasses import dataclass, field, fields

import numpy as np

from .inner_solver import InnerCaps, init_inner, run_inner
from .metrics import feasibility_violations, train_test_err
from .network import NetworkShape, Params, forward, objective_penalized
from .penalty import (Multipliers, augmented_lagrangian, compute_theta, kkt_residual,
                      layered_norm, primal_residual)

log = logging.getLogger(__name__)

CSV_HEADER = ["k", "rho", "eps", "L", "O", "TrainErr", "TestErr", "FeasVi1", "FeasVi2",
              "KKTVi", "inner_iters", "wall_s", "feas_norm"]


@dataclass
class IalmConfig:
    eta1: float = 0.99
    eta2: float = 5.0 / 6.0
    eta3: float = 0.01
    eta4: float = 2.0 / 3.0
    eps0: float = 0.1
    rho0: float = None  # default 1/N
    gamma: int = None   # default 2L
    stop_eps: float = 1e-6
    stop_rho_factor: float = 1e3
    max_outer: int = 1000
    caps: InnerCaps = field(default_factory=InnerCaps)
    record_wall_time: bool = False
    max_wall_s: float = None  # optional time budget; makes the run time-dependent
    init: str = "scaled"      # "scaled": randn/N, "fan_in": randn/sqrt(N_{l-1})

    def resolved(self, shape):
        """Copy with the data-dependent defaults filled in."""
        cfg = IalmConfig(**{f.name: getattr(self, f.name) for f in fields(self)})
        if cfg.rho0 is None:
            cfg.rho0 = 1.0 / shape.N
        if cfg.gamma is None:
            cfg.gamma = 2 * shape.L
        cfg.validate()
        return cfg

    def validate(self):
        for name in ("eta1", "eta2", "eta4"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")
        if not self.eta3 > 0:
            raise ValueError("eta3 must be positive")
        if not (self.eps0 > 0 and self.rho0 > 0):
            raise ValueError("eps0 and rho0 must be positive")
        if int(self.gamma) < 1:
            raise ValueError("gamma must be >= 1")
        if self.max_outer < 1:
            raise ValueError("max_outer must be >= 1")
        if self.init not in INIT_SCHEMES:
            raise ValueError(f"init must be one of {INIT_SCHEMES}, got {self.init!r}")
        if self.max_wall_s is not None and not self.max_wall_s > 0:
            raise ValueError("max_wall_s must be positive")

    @classmethod
    def theory_mode(cls, **kw):
        """Settings covered by the global convergence theory (``eta3 > 1``)."""
        kw.setdefault("eta3", 1.01)
        return cls(**kw)


@dataclass
class RunRecord:
    k: int
    rho: float
    eps: float
    L: float
    O: float
    TrainErr: float
    TestErr: float
    FeasVi1: float
    FeasVi2: float
    KKTVi: float
    inner_iters: int
    wall_s: float
    feas_norm: float
    kkt_dist: float = float("nan")
    kkt_scaled: float = float("nan")
    descent_violations: int = 0

    def csv_row(self, with_time=False):
        vals = []
        for name in CSV_HEADER:
            v = getattr(self, name)
            if name == "wall_s" and not with_time:
                vals.append("")
            elif isinstance(v, (int, np.integer)):
                vals.append(str(int(v)))
            else:
                vals.append(format_float(v))
        return vals


def format_float(x):
    return "" if x is None else format(float(x), ".17g")


def write_records_csv(records, fh, with_time=False):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for rec in records:
        w.writerow(rec.csv_row(with_time))


def records_to_csv(records, with_time=False):
    buf = io.StringIO()
    write_records_csv(records, buf, with_time)
    return buf.getvalue()


def update_multipliers(xi, rho, residual):
    """``xi + rho * r`` layer by layer."""
    if rho <= 0:
        raise ValueError("rho must be positive")
    xs = xi.xi if isinstance(xi, Multipliers) else xi
    return Multipliers([X + rho * R for X, R in zip(xs, residual)])


def schedule_step(k, gamma, eta1, eta2, eta3, eta4, rho, eps, feas_history, xi_norm):
    """Penalty / tolerance update after outer iteration ``k``.

    ``feas_history`` lists the residual norms of iterations ``1..k`` (at least
    the last ``gamma + 1`` when ``k > gamma``); its last entry is iteration k.

    Returns
    -------
    (rho_new, eps_new, branch) with branch in {"hold", "tighten", "escalate"}.
    """
    if k <= gamma:
        return rho, eps, "hold"
    if len(feas_history) < gamma + 1:
        raise ValueError(f"need {gamma + 1} residual norms, got {len(feas_history)}")
    current = feas_history[-1]
    window = max(feas_history[-gamma - 1:-1])
    if current <= eta1 * window:
        return rho, math.sqrt(eta1) * eps, "tighten"
    return max(rho / eta2, xi_norm ** (1.0 + eta3)), eta4 * eps, "escalate"


INIT_SCHEMES = ("scaled", "fan_in")


def init_params(shape, seed, scheme="scaled"):
    """Gaussian weights and zero biases.

    ``scheme="scaled"`` divides the weights by the sample count ``N`` (the
    default); ``"fan_in"`` divides them by ``sqrt(N_{l-1})`` instead.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    d = shape.dims
    if scheme == "scaled":
        scale = [1.0 / shape.N] * shape.L
    elif scheme == "fan_in":
        scale = [1.0 / np.sqrt(d[l - 1]) for l in range(1, shape.L + 1)]
    else:
        raise ValueError(f"unknown init scheme {scheme!r}")
    Ws = [rng.standard_normal((d[l], d[l - 1])) * scale[l - 1] for l in range(1, shape.L + 1)]
    return Params(Ws, [np.zeros(d[l]) for l in range(1, shape.L + 1)])


@dataclass
class IalmResult:
    params: Params
    aux: object
    xi: Multipliers
    records: list
    stop_reason: str


def run_ialam(batch, hp, cfg, seed, dims=None, test_batch=None, params0=None, callback=None):
    """Train with the inexact augmented Lagrangian method.

    Parameters
    ----------
    batch : DataBatch
        Training data.
    hp : HyperParams
    cfg : IalmConfig
    seed : int
        Seed of the weight initialization.
    dims : sequence of int, optional
        Layer widths ``(N_0, ..., N_L)``; inferred from ``params0`` if omitted.
    test_batch : DataBatch, optional
        Used only for the ``TestErr`` column.
    params0 : Params, optional
        Overrides the random initialization.
    callback : callable, optional
        Called with each :class:`RunRecord`.

    Returns
    -------
    IalmResult
    """
    if dims is None:
        if params0 is None:
            raise ValueError("pass dims or params0")
        dims = (params0.weights[0].shape[1],) + tuple(W.shape[0] for W in params0.weights)
    shape = NetworkShape(tuple(dims), batch.N)
    if params0 is None:
        params0 = init_params(shape, seed, cfg.init)
    return _run(batch, hp, cfg, shape, params0, test_batch, callback, seed)


def _run(batch, hp, cfg, shape, params0, test_batch, callback, seed):
    cfg = cfg.resolved(shape)
    params0.check(shape)
    t0 = time.perf_counter()
    aux0 = forward(params0, batch, hp)
    theta = compute_theta(batch, params0, aux0, hp).theta
    xi = Multipliers.zeros(shape)
    rho, eps = cfg.rho0, cfg.eps0
    params, aux = params0, aux0
    snapshot = None
    feas_hist = []
    records = []
    cache = {}
    stop_reason = "max_outer"
    log.info("IALAM start: seed=%s dims=%s N=%d theta=%.6e", seed, shape.dims, shape.N, theta)
    for k in range(1, cfg.max_outer + 1):
        state, snapshot = init_inner(params, snapshot, k, rho, xi, batch, hp, theta)
        state, report = run_inner(state, rho, xi, batch, hp, theta, eps, cfg.caps, cache)
        params, aux = state.params, state.aux
        kkt = kkt_residual(params, aux, xi, rho, batch, hp)
        L_val = augmented_lagrangian(params, aux, xi, rho, batch, hp)
        res = primal_residual(params, aux, batch)
        feas_norm = layered_norm(res)
        xi_prev_norm = xi.norm()
        xi = update_multipliers(xi, rho, res)
        feas_hist.append(feas_norm)
        f1, f2, _ = feasibility_violations(params, aux, batch, hp)
        tr, te = train_test_err(params, batch, test_batch, hp)
        rec = RunRecord(
            k=k, rho=rho, eps=eps, L=L_val, O=objective_penalized(params, aux, batch, hp),
            TrainErr=tr, TestErr=te, FeasVi1=f1, FeasVi2=f2,
            KKTVi=kkt.residual_norm + 0.5 * f2, inner_iters=report.iterations,
            wall_s=time.perf_counter() - t0, feas_norm=feas_norm,
            kkt_dist=kkt.residual_norm, kkt_scaled=kkt.residual_norm / (1.0 + xi_prev_norm),
            descent_violations=report.descent_violations,
        )
        records.append(rec)
        log.debug("k=%d rho=%.3e eps=%.3e L=%.6e feas=%.3e kkt=%.3e (scaled %.3e) inner=%d",
                  k, rho, eps, L_val, feas_norm, kkt.residual_norm, rec.kkt_scaled,
                  report.iterations)
        if callback is not None:
            callback(rec)
        rho, eps, _ = schedule_step(k, cfg.gamma, cfg.eta1, cfg.eta2, cfg.eta3, cfg.eta4,
                                    rho, eps, feas_hist, xi.norm())
        if eps < cfg.stop_eps:
            stop_reason = "eps"
            break
        if rho > cfg.stop_rho_factor * cfg.rho0:
            stop_reason = "rho"
            break
        if cfg.max_wall_s is not None and time.perf_counter() - t0 > cfg.max_wall_s:
            stop_reason = "time"
            break
    return IalmResult(params, aux, xi, records, stop_reason)
