"""Network definition: shapes, hyperparameters, forward pass and objectives.

Layered quantities (``v``, ``u``, multipliers, residuals) are stored as a
list with one ``(N_l, N)`` array per layer ``l = 1..L``; column ``n`` holds
sample ``n``. :func:`flatten_layered` gives the canonical layer-major,
sample-major coordinate order.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from .linalg import DimensionError, column_norms

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class NetworkShape:
    """Layer widths ``dims = (N_0, ..., N_L)`` and training-set size ``N``."""

    dims: tuple
    N: int

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        if len(self.dims) < 2:
            raise ValueError("need at least one layer (len(dims) >= 2)")
        if any(d < 1 for d in self.dims):
            raise ValueError(f"all layer widths must be >= 1, got {self.dims}")
        if self.N < 1:
            raise ValueError("N must be >= 1")

    @property
    def L(self):
        return len(self.dims) - 1

    @property
    def n_weights(self):
        return sum(self.dims[l] * self.dims[l - 1] for l in range(1, self.L + 1))

    @property
    def n_hidden(self):
        """Sum of layer widths N_1 + ... + N_L."""
        return sum(self.dims[1:])

    @property
    def m(self):
        return self.N * self.n_hidden


@dataclass
class HyperParams:
    alpha: float
    lambda_w: float
    lambda_v: float
    beta: np.ndarray
    tau1: float

    def __post_init__(self):
        self.beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError(f"alpha must lie in [0, 1), got {self.alpha}")
        for name in ("lambda_w", "lambda_v", "tau1"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if np.any(self.beta <= 0):
            raise ValueError("beta entries must be positive")
        if self.alpha == 0.0:
            log.warning(
                "alpha=0 (plain ReLU): boundedness of the level set is not "
                "guaranteed without a box on b; running anyway"
            )

    @classmethod
    def defaults(cls, shape, alpha=0.01):
        """Default model parameters scaled by the sample count."""
        N = shape.N
        return cls(
            alpha=alpha,
            lambda_w=1.0 / N,
            lambda_v=1.0 / (100 * N),
            beta=np.full(shape.L, 1.0 / N),
            tau1=1.0 / (10 * N),
        )

    def beta_for(self, L):
        if self.beta.size == 1:
            return np.full(L, float(self.beta[0]))
        if self.beta.size != L:
            raise DimensionError(f"beta has {self.beta.size} entries, network has {L} layers")
        return self.beta


@dataclass
class Params:
    weights: list
    biases: list

    @property
    def L(self):
        return len(self.weights)

    def copy(self):
        return Params([W.copy() for W in self.weights], [b.copy() for b in self.biases])

    def check(self, shape):
        if self.L != shape.L:
            raise DimensionError(f"params have {self.L} layers, shape has {shape.L}")
        for l, (W, b) in enumerate(zip(self.weights, self.biases), start=1):
            if W.shape != (shape.dims[l], shape.dims[l - 1]) or b.shape != (shape.dims[l],):
                raise DimensionError(
                    f"layer {l}: W {W.shape}, b {b.shape} inconsistent with dims {shape.dims}"
                )

    @classmethod
    def zeros(cls, shape):
        d = shape.dims
        return cls(
            [np.zeros((d[l], d[l - 1])) for l in range(1, shape.L + 1)],
            [np.zeros(d[l]) for l in range(1, shape.L + 1)],
        )

    def flat_weights(self):
        # column-wise vec(W_l), stacked over layers
        return np.concatenate([W.ravel(order="F") for W in self.weights])

    def flat_biases(self):
        return np.concatenate(self.biases)


@dataclass
class AuxState:
    """Auxiliary variables ``v`` and ``u``; ``v[l-1]`` is layer ``l``."""

    v: list
    u: list
    feasible: bool = field(default=False, compare=False)

    def copy(self):
        return AuxState([a.copy() for a in self.v], [a.copy() for a in self.u], self.feasible)

    def cone_violation(self, alpha):
        """Largest violation of ``v >= u`` and ``v >= alpha*u`` (0 if feasible)."""
        worst = 0.0
        for V, U in zip(self.v, self.u):
            worst = max(worst, float(np.max(U - V, initial=0.0)),
                        float(np.max(alpha * U - V, initial=0.0)))
        return worst


@dataclass
class DataBatch:
    """Inputs ``X`` (N_0 x N) and targets ``Y`` (N_L x N), samples as columns."""

    X: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.Y = np.asarray(self.Y, dtype=float)
        if self.X.ndim != 2 or self.Y.ndim != 2 or self.X.shape[1] != self.Y.shape[1]:
            raise DimensionError(f"X {self.X.shape} and Y {self.Y.shape} disagree on N")

    @property
    def N(self):
        return self.X.shape[1]

    def subset(self, idx):
        return DataBatch(self.X[:, idx], self.Y[:, idx])


def flatten_layered(arrs):
    """Layer-major, then sample-major flattening of a layered array."""
    return np.concatenate([A.T.ravel() for A in arrs])


def unflatten_layered(vec, shape):
    out, pos = [], 0
    for l in range(1, shape.L + 1):
        k = shape.dims[l] * shape.N
        out.append(vec[pos:pos + k].reshape(shape.N, shape.dims[l]).T.copy())
        pos += k
    return out


def leaky_relu(z, alpha):
    """Component-wise ``max(z, alpha*z)``."""
    z = np.asarray(z, dtype=float)
    return np.maximum(z, alpha * z)


def forward(params, batch, hp):
    """Propagate the inputs, returning the (feasible) auxiliary state."""
    V_prev = batch.X
    vs, us = [], []
    for W, b in zip(params.weights, params.biases):
        if W.shape[1] != V_prev.shape[0]:
            raise DimensionError(f"W has {W.shape[1]} columns, input has {V_prev.shape[0]} rows")
        U = W @ V_prev + b[:, None]
        V_prev = leaky_relu(U, hp.alpha)
        us.append(U)
        vs.append(V_prev)
    return AuxState(vs, us, feasible=True)


def predict(params, X, alpha):
    V = X
    for W, b in zip(params.weights, params.biases):
        V = leaky_relu(W @ V + b[:, None], alpha)
    return V


def group_norm(params):
    """Sum over layers of the column-wise l2,1 norm."""
    return float(sum(column_norms(W).sum() for W in params.weights))


def objective_obar(params, aux, batch, hp):
    """Regularized loss of the auxiliary model (no penalty term)."""
    N = batch.N
    loss = float(np.sum((aux.v[-1] - batch.Y) ** 2)) / N
    reg_v = hp.lambda_v * float(sum(np.sum(V * V) for V in aux.v))
    return loss + hp.lambda_w * group_norm(params) + reg_v


def penalty_term(aux, hp):
    beta = hp.beta_for(len(aux.v))
    return float(sum(
        beta[l] * np.sum(V - leaky_relu(U, hp.alpha))
        for l, (V, U) in enumerate(zip(aux.v, aux.u))
    ))


def objective_penalized(params, aux, batch, hp, tol=1e-12):
    """``objective_obar`` plus ``sum_l beta_l * sum(v_l - sigma(u_l))``.

    Evaluates even when ``v >= sigma(u)`` is violated; a violation beyond
    ``tol`` is logged.
    """
    if aux.cone_violation(hp.alpha) > tol:
        log.debug("objective_penalized evaluated at a point with v < sigma(u)")
    return objective_obar(params, aux, batch, hp) + penalty_term(aux, hp)
