"""Evaluation quantities: errors, accuracy, feasibility, sparsity, profiles."""
from dataclasses import dataclass, field

import numpy as np

from .linalg import column_norms
from .network import leaky_relu, predict

FAIL_RATIO = 10000.0


@dataclass
class MetricRow:
    TrainErr: float
    TestErr: float
    Accuracy: float = float("nan")
    TestAcc: float = float("nan")
    FeasVi1: float = float("nan")
    FeasVi2: float = float("nan")
    FeasVi: float = float("nan")
    KKTVi: float = float("nan")
    TestErr_paperN: float = float("nan")
    sparsity: dict = field(default_factory=dict)


def squared_error_sum(params, batch, hp):
    out = predict(params, batch.X, hp.alpha)
    return float(np.sum((out - batch.Y) ** 2))


def train_test_err(params, batch_train, batch_test, hp):
    """Mean squared error of the network on the training and test sets.

    The test error is averaged over the test samples; pass ``batch_test=None``
    to get ``nan`` for it.
    """
    train = squared_error_sum(params, batch_train, hp) / batch_train.N
    if batch_test is None or batch_test.N == 0:
        return train, float("nan")
    return train, squared_error_sum(params, batch_test, hp) / batch_test.N


def heldout_err_over_train_n(params, batch_train, batch_test, hp):
    """Test squared error divided by the *training* sample count."""
    return squared_error_sum(params, batch_test, hp) / batch_train.N


def accuracy(params, batch, hp):
    """Fraction of samples whose output argmax matches the target argmax
    (``np.argmax`` breaks ties toward the lowest index)."""
    out = predict(params, batch.X, hp.alpha)
    return float(np.mean(np.argmax(out, axis=0) == np.argmax(batch.Y, axis=0)))


def feasibility_violations(params, aux, batch, hp):
    """``(FeasVi1, FeasVi2, FeasVi)``.

    FeasVi1 is the mean (over samples) squared violation of ``v = sigma(u)``,
    FeasVi2 the same for ``u = W v_prev + b``; FeasVi is their sum divided by
    the total number of hidden units.
    """
    N = batch.N
    f1 = sum(float(np.sum((V - leaky_relu(U, hp.alpha)) ** 2)) for V, U in zip(aux.v, aux.u))
    f2 = 0.0
    V_prev = batch.X
    for W, b, V, U in zip(params.weights, params.biases, aux.v, aux.u):
        f2 += float(np.sum((U - (W @ V_prev + b[:, None])) ** 2))
        V_prev = V
    f1 /= N
    f2 /= N
    n_bar = sum(W.shape[0] for W in params.weights)
    return f1, f2, (f1 + f2) / n_bar


def column_sparsity_ratio(params, tolerance):
    """Share of weight columns whose norm is ``<= tolerance``.

    The denominator is ``N_0 + ... + N_{L-1}``, the total column count.
    """
    if tolerance < 0:
        raise ValueError("tolerance must be nonnegative")
    hits = sum(int(np.sum(column_norms(W) <= tolerance)) for W in params.weights)
    total = sum(W.shape[1] for W in params.weights)
    return hits / total


def _failed(x):
    return x is None or not np.isfinite(x)


def performance_ratios(results):
    """Per-problem ratios to the best solver; failures get ``FAIL_RATIO``.

    ``results`` maps solver name to a list of per-problem values, with
    ``None``/``nan``/``inf`` marking a failed run.
    """
    names = list(results)
    if not names:
        raise ValueError("no solvers given")
    n_prob = len(results[names[0]])
    if n_prob == 0:
        raise ValueError("empty problem set")
    if any(len(results[s]) != n_prob for s in names):
        raise ValueError("solvers disagree on the number of problems")
    ratios = {s: np.full(n_prob, FAIL_RATIO) for s in names}
    for p in range(n_prob):
        ok = [results[s][p] for s in names if not _failed(results[s][p])]
        if not ok:
            continue
        best = min(ok)
        for s in names:
            t = results[s][p]
            if _failed(t):
                continue
            if best > 0:
                ratios[s][p] = min(t / best, FAIL_RATIO)
            else:
                # zero best value: only exact ties count as ratio 1
                ratios[s][p] = 1.0 if t == best else FAIL_RATIO
    return ratios


@dataclass
class Profile:
    """Right-continuous step function ``pi(omega)`` given by its breakpoints."""

    omega: np.ndarray
    pi: np.ndarray

    def __call__(self, w):
        idx = np.searchsorted(self.omega, w, side="right") - 1
        return np.where(idx >= 0, self.pi[np.maximum(idx, 0)], 0.0)


def performance_profile(results):
    """Performance profiles of several solvers over a shared problem set.

    Returns
    -------
    dict
        Solver name -> :class:`Profile`; ``pi(omega)`` is the fraction of
        problems whose ratio is ``<= omega``.
    """
    ratios = performance_ratios(results)
    out = {}
    for s, r in ratios.items():
        r = np.sort(r)
        omega, counts = np.unique(r, return_counts=True)
        out[s] = Profile(omega, np.cumsum(counts) / r.size)
    return out


def profile_table(profiles):
    """Rows ``(omega, pi_s1, pi_s2, ...)`` on the union of breakpoints."""
    grid = np.unique(np.concatenate([p.omega for p in profiles.values()]))
    names = list(profiles)
    return names, [(w, *[float(profiles[s](w)) for s in names]) for w in grid]
