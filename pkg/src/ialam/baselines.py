"""Stochastic first-order baselines trained directly on the regularized loss.

All methods share :func:`backprop_minibatch`. The kink derivative of the
leaky ReLU is taken as ``alpha`` at zero.
"""
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .linalg import column_norms
from .network import group_norm
from .metrics import accuracy, train_test_err
from .proxkernels import prox_group_lasso

log = logging.getLogger(__name__)

METHODS = ("sgd", "adam", "adamax", "adadelta", "adagrad", "adagraddecay", "proxsgd")

# per-method defaults; anything left as None in SgdConfig is taken from here
_DEFAULTS = {
    "sgd": dict(lr=1e-2, decay=True),
    "proxsgd": dict(lr=1e-2, decay=True),
    "adam": dict(lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8, decay=False),
    "adamax": dict(lr=2e-3, beta1=0.9, beta2=0.999, eps=1e-8, decay=False),
    "adadelta": dict(lr=1.0, rho=0.95, eps=1e-6, decay=False),
    "adagrad": dict(lr=1e-2, eps=1e-8, decay=False),
    "adagraddecay": dict(lr=1e-2, eps=1e-8, decay=True),
}


@dataclass
class SgdConfig:
    method: str = "adam"
    batch_size: int = None   # default ceil(sqrt(N))
    max_epochs: int = 1000
    lr: float = None
    beta1: float = None
    beta2: float = None
    rho: float = None
    eps: float = None
    decay: bool = None       # lr / sqrt(epoch)
    seed: int = 0

    def resolved(self, N):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        cfg = replace(self)
        for k, v in _DEFAULTS[self.method].items():
            if getattr(cfg, k) is None:
                setattr(cfg, k, v)
        if cfg.batch_size is None:
            cfg.batch_size = math.ceil(math.sqrt(N))
        if not 1 <= cfg.batch_size <= N:
            raise ValueError(f"batch_size must lie in [1, {N}], got {cfg.batch_size}")
        if cfg.max_epochs < 0:
            raise ValueError("max_epochs must be >= 0")
        if not cfg.lr > 0:
            raise ValueError("lr must be positive")
        return cfg


@dataclass
class GradientBundle:
    dW: list
    db: list


@dataclass
class EpochRecord:
    epoch: int
    TrainErr: float
    TestErr: float
    Accuracy: float
    O: float
    diverged: bool = False


@dataclass
class BaselineResult:
    params: object
    records: list = field(default_factory=list)
    diverged: bool = False


def backprop_minibatch(params, indices, batch, hp, regularize=True):
    """Gradient of ``(1/|B|) sum_B ||net(x_n) - y_n||^2`` plus, when
    ``regularize``, the group-norm subgradient ``lambda_w * col/||col||``
    (zero for zero columns)."""
    indices = np.asarray(indices)
    if indices.size == 0:
        raise ValueError("empty minibatch")
    if indices.min() < 0 or indices.max() >= batch.N:
        raise IndexError("minibatch index out of range")
    a = hp.alpha
    V = batch.X[:, indices]
    inputs, pre = [V], []
    for W, b in zip(params.weights, params.biases):
        U = W @ V + b[:, None]
        V = np.maximum(U, a * U)
        pre.append(U)
        inputs.append(V)
    B = indices.size
    dV = (2.0 / B) * (V - batch.Y[:, indices])
    dW, db = [None] * params.L, [None] * params.L
    for l in range(params.L - 1, -1, -1):
        dU = dV * np.where(pre[l] > 0, 1.0, a)
        dW[l] = dU @ inputs[l].T
        db[l] = dU.sum(axis=1)
        if l > 0:
            dV = params.weights[l].T @ dU
    if regularize and hp.lambda_w != 0:
        for l, W in enumerate(params.weights):
            norms = column_norms(W)
            nz = norms > 0
            dW[l][:, nz] += hp.lambda_w * W[:, nz] / norms[nz]
    return GradientBundle(dW, db)


class _Stepper:
    """Per-parameter optimizer state for one method."""

    def __init__(self, cfg, params):
        self.cfg = cfg
        self.t = 0
        zeros = lambda: [np.zeros_like(a) for a in params.weights + params.biases]
        self.m, self.v = zeros(), zeros()
        if cfg.method == "adadelta":
            self.dx = zeros()

    def step(self, arrays, grads, lr):
        c = self.cfg
        self.t += 1
        out = []
        for i, (x, g) in enumerate(zip(arrays, grads)):
            if c.method in ("sgd", "proxsgd"):
                out.append(x - lr * g)
            elif c.method == "adam":
                self.m[i] = c.beta1 * self.m[i] + (1 - c.beta1) * g
                self.v[i] = c.beta2 * self.v[i] + (1 - c.beta2) * g * g
                mh = self.m[i] / (1 - c.beta1 ** self.t)
                vh = self.v[i] / (1 - c.beta2 ** self.t)
                out.append(x - lr * mh / (np.sqrt(vh) + c.eps))
            elif c.method == "adamax":
                self.m[i] = c.beta1 * self.m[i] + (1 - c.beta1) * g
                self.v[i] = np.maximum(c.beta2 * self.v[i], np.abs(g))
                out.append(x - lr / (1 - c.beta1 ** self.t) * self.m[i] / (self.v[i] + c.eps))
            elif c.method == "adadelta":
                self.v[i] = c.rho * self.v[i] + (1 - c.rho) * g * g
                dx = -np.sqrt(self.dx[i] + c.eps) / np.sqrt(self.v[i] + c.eps) * g
                self.dx[i] = c.rho * self.dx[i] + (1 - c.rho) * dx * dx
                out.append(x + lr * dx)
            else:  # adagrad, adagraddecay
                self.v[i] = self.v[i] + g * g
                out.append(x - lr * g / (np.sqrt(self.v[i]) + c.eps))
        return out


def _record(epoch, params, batch, test_batch, hp):
    tr, te = train_test_err(params, batch, test_batch, hp)
    acc = accuracy(params, batch, hp) if batch.Y.shape[0] > 1 else float("nan")
    obj = tr + hp.lambda_w * group_norm(params)
    return EpochRecord(epoch, tr, te, acc, obj, diverged=not math.isfinite(tr))


def _train(batch, hp, cfg, params0, test_batch, prox):
    cfg = cfg.resolved(batch.N)
    params = params0.copy()
    L = params.L
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    stepper = _Stepper(cfg, params)
    result = BaselineResult(params)
    for epoch in range(1, cfg.max_epochs + 1):
        lr = cfg.lr / math.sqrt(epoch) if cfg.decay else cfg.lr
        perm = rng.permutation(batch.N)
        for start in range(0, batch.N, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            g = backprop_minibatch(params, idx, batch, hp, regularize=not prox)
            new = stepper.step(params.weights + params.biases, g.dW + g.db, lr)
            params.weights, params.biases = new[:L], new[L:]
            if prox:
                params.weights = [prox_group_lasso(W, lr * hp.lambda_w) for W in params.weights]
        rec = _record(epoch, params, batch, test_batch, hp)
        result.records.append(rec)
        if rec.diverged:
            log.warning("%s diverged at epoch %d", cfg.method, epoch)
            result.diverged = True
            break
    result.params = params
    return result


def run_sgd_family(batch, hp, cfg, params0, test_batch=None):
    """Train with one of sgd/adam/adamax/adadelta/adagrad/adagraddecay.

    Each epoch visits a fresh random permutation of the samples in
    minibatches of ``cfg.batch_size``. Returns ``(params, records)``;
    ``records`` stops early (last entry flagged ``diverged``) if the training
    error becomes non-finite.
    """
    if cfg.method == "proxsgd":
        return run_proxsgd(batch, hp, cfg, params0, test_batch)
    res = _train(batch, hp, cfg, params0, test_batch, prox=False)
    return res.params, res.records


def run_proxsgd(batch, hp, cfg, params0, test_batch=None):
    """SGD on the squared loss followed by the group-norm prox with
    threshold ``lr * lambda_w`` after every step."""
    cfg = replace(cfg, method="proxsgd")
    res = _train(batch, hp, cfg, params0, test_batch, prox=True)
    return res.params, res.records
