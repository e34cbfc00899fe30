"""Alternating minimization for the augmented Lagrangian subproblem.

One sweep updates the ``(W, b)`` block by proximal gradient with
Barzilai-Borwein steps (``b`` eliminated exactly) and then the ``(v, u)``
block in closed form, coordinate by coordinate, after adding a proximal
term that decouples the layers.
"""
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .linalg import augmented_spectral_norm_sq, spectral_norm
from .network import AuxState, Params, forward
from .penalty import _xi_list, augmented_lagrangian, kkt_residual
from .proxkernels import layer_coeffs, solve_scalar_vu

log = logging.getLogger(__name__)

STEP_MIN, STEP_MAX = 1e-8, 1e8
STALL_ITERS = 20


class InnerSolverError(RuntimeError):
    """Hard failure of the inner solver (non-finite iterate, level set left)."""


@dataclass
class InnerCaps:
    max_inner: int = 500
    max_wb_iter: int = 1000
    wb_tol: Optional[float] = None  # default: min(1e-8, 0.1 * eps_k)
    power_tol: float = 1e-10
    descent_slack: float = 1e-10
    raise_on_descent_violation: bool = False


@dataclass
class InnerState:
    params: Params
    aux: AuxState
    tau: list = field(default_factory=list)  # tau_2..tau_L of the last (v, u) solve
    j: int = 0
    L_value: float = float("nan")
    steps: tuple = (0.0, 0.0, 0.0, 0.0)  # |dw|, |db|, |dv|, |du|


@dataclass
class InnerReport:
    iterations: int
    residual: float
    satisfied_theta: bool
    descent_violations: int
    worst_descent_gap: float = 0.0
    history: list = field(default_factory=list)
    wb_iterations: int = 0


@dataclass
class InitSnapshot:
    params: Params
    aux: AuxState


class _LayerQuadratic:
    """``(rho/2) ||T - W Vp - b 1^T||^2`` with ``b`` minimized out.

    Only ``Vp``-dependent pieces (centered Gram matrix, its top eigenvalue)
    are kept here so they can be reused while ``Vp`` is fixed.
    """

    def __init__(self, Vp, power_tol=1e-10):
        self.vbar = Vp.mean(axis=1)
        Vc = Vp - self.vbar[:, None]
        self.Vc = Vc
        self.gram = Vc @ Vc.T
        self.gram_top = spectral_norm(self.gram, tol=power_tol).value if self.gram.size else 0.0


def _colnorms(W):
    return np.sqrt(np.einsum("ij,ij->j", W, W))


def _group_stationarity(W, grad, lam, norms=None):
    """``dist(0, grad + lam * d||W||_{2,1})``; independent of any step size."""
    if norms is None:
        norms = _colnorms(W)
    nz = norms > 0
    res = np.maximum(0.0, _colnorms(grad) - lam)
    if nz.any():
        R = grad[:, nz] + lam * (W[:, nz] / norms[nz])
        res[nz] = _colnorms(R)
    return float(np.sqrt(res @ res))


def _wb_layer(W0, T, quad, rho, lam, tol, max_it, t0=None):
    tbar = T.mean(axis=1)
    Tc = T - tbar[:, None]
    C = Tc @ quad.Vc.T
    const = float(np.einsum("ij,ij->", Tc, Tc))
    G = quad.gram

    def smooth(W):
        WG = W @ G
        f = 0.5 * rho * (const - 2.0 * np.einsum("ij,ij->", W, C) + np.einsum("ij,ij->", WG, W))
        return f, rho * (WG - C)

    def prox(Z, thr):
        nz = _colnorms(Z)
        scale = np.zeros_like(nz)
        pos = nz > thr
        scale[pos] = 1.0 - thr / nz[pos]
        return Z * scale, nz * scale

    lip = rho * quad.gram_top
    t_safe = 1.0 / lip if lip > 0 else STEP_MAX
    t_safe = min(max(t_safe, STEP_MIN), STEP_MAX)
    W = W0.copy()
    f, grad = smooth(W)
    norms = _colnorms(W)
    F = f + lam * norms.sum()
    t = t_safe if t0 is None else min(max(t0, STEP_MIN), STEP_MAX)
    it = stall = 0
    best_gap = np.inf
    for it in range(1, max_it + 1):
        gap = _group_stationarity(W, grad, lam, norms)
        if gap <= tol:
            it -= 1
            break
        # rounding floor: the stationarity measure stopped improving
        stall = stall + 1 if gap >= best_gap else 0
        best_gap = min(best_gap, gap)
        if stall >= STALL_ITERS:
            break
        while True:
            W_new, norms_new = prox(W - t * grad, t * lam)
            f_new, grad_new = smooth(W_new)
            F_new = f_new + lam * norms_new.sum()
            if F_new <= F:
                break
            if t <= t_safe:
                # a 1/Lipschitz step decreases F in exact arithmetic, so an
                # increase here is rounding noise: keep the step unless the
                # step had to be clamped above 1/Lipschitz
                if t_safe * lip > 1.0:
                    W_new, f_new, grad_new, F_new, norms_new = W, f, grad, F, norms
                break
            t = max(t / 2.0, t_safe)
        s = W_new - W
        y = grad_new - grad
        sy = float(np.einsum("ij,ij->", s, y))
        W, f, grad, F, norms = W_new, f_new, grad_new, F_new, norms_new
        if not np.isfinite(F):
            raise InnerSolverError("non-finite weights in (W, b) block")
        ss = float(np.einsum("ij,ij->", s, s))
        if ss == 0.0:
            break
        t = min(max(ss / sy, STEP_MIN), STEP_MAX) if sy > 0 else t_safe
    b = tbar - W @ quad.vbar
    return W, b, it, t


def solve_wb(aux, xi, rho, batch, hp, tol_wb, max_it, start=None, cache=None):
    """Minimize the augmented Lagrangian over ``(W, b)`` with ``(v, u)`` fixed.

    Layers are independent. For each one, ``b`` is eliminated exactly
    (``b = mean_n(t_n - W v_n)``) and ``W`` follows proximal gradient steps
    with Barzilai-Borwein step lengths, halved until the objective does not
    increase.

    Parameters
    ----------
    start : Params, optional
        Warm start for ``W`` (defaults to zeros).
    cache : dict, optional
        Per-run scratch space: the layer-1 quadratic (its input is the fixed
        data matrix) and the last accepted step length of every layer, used
        to warm-start the next call.

    Returns
    -------
    (Params, int)
        New parameters and the total number of proximal-gradient steps.
    """
    xi = _xi_list(xi)
    L = len(aux.u)
    V_prev = [batch.X] + aux.v[:-1]
    Ws, bs, total_it = [], [], 0
    for l in range(L):
        quad = None
        if cache is not None and l in cache:
            quad = cache[l]
        if quad is None:
            quad = _LayerQuadratic(V_prev[l])
            if cache is not None and l == 0:
                cache[0] = quad
        T = aux.u[l] + xi[l] / rho
        W0 = start.weights[l] if start is not None else np.zeros((T.shape[0], V_prev[l].shape[0]))
        t0 = cache.get(("step", l)) if cache is not None else None
        W, b, it, t_last = _wb_layer(W0, T, quad, rho, hp.lambda_w, tol_wb, max_it, t0)
        if cache is not None:
            cache[("step", l)] = t_last
        if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
            raise InnerSolverError(f"non-finite (W, b) in layer {l + 1}: W={W!r}, b={b!r}")
        Ws.append(W)
        bs.append(b)
        total_it += it
    return Params(Ws, bs), total_it


def compute_tau(params, rho, hp, power_tol=1e-10):
    """Proximal weights ``[tau_1, tau_2, ..., tau_L]`` for the new weights."""
    tau = [hp.tau1]
    for W in params.weights[1:]:
        tau.append(rho * augmented_spectral_norm_sq(W, tol=power_tol) + hp.tau1)
    return tau


def solve_vu(params_new, state, xi, rho, batch, hp, tau=None):
    """Exact minimizer of the proximally regularized ``(v, u)`` subproblem.

    Splits into one two-variable problem per coordinate, each solved in
    closed form by :func:`solve_scalar_vu`.
    """
    xi = _xi_list(xi)
    if tau is None:
        tau = compute_tau(params_new, rho, hp)
    coeffs = layer_coeffs(params_new, state.aux, xi, rho, tau, batch, hp)
    vs, us = [], []
    for co in coeffs:
        r, s = solve_scalar_vu(co)
        vs.append(r)
        us.append(s)
    return AuxState(vs, us, feasible=True)


def init_inner(prev_params, prev_init, k, rho, xi, batch, hp, theta):
    """Starting point of the inner loop at outer iteration ``k``.

    The candidate is the previous weights with freshly propagated ``(v, u)``.
    For ``k > 1`` it is rejected in favour of the stored previous starting
    point if its augmented Lagrangian value reaches ``theta``.

    Returns
    -------
    (InnerState, InitSnapshot)
        The state to start from and the snapshot to remember.
    """
    theta = getattr(theta, "theta", theta)
    cand_aux = forward(prev_params, batch, hp)
    cand = InitSnapshot(prev_params.copy(), cand_aux)
    if k > 1 and prev_init is not None:
        if augmented_lagrangian(cand.params, cand.aux, xi, rho, batch, hp) >= theta:
            chosen = prev_init
        else:
            chosen = cand
    else:
        chosen = cand
    state = InnerState(chosen.params.copy(), chosen.aux.copy())
    state.L_value = augmented_lagrangian(state.params, state.aux, xi, rho, batch, hp)
    return state, chosen


def _sq(arrs_a, arrs_b):
    return float(sum(np.sum((a - b) ** 2) for a, b in zip(arrs_a, arrs_b)))


def run_inner(state, rho, xi, batch, hp, theta, eps_k, caps=None, cache=None):
    """Alternate the two block updates until the KKT surrogate is ``<= eps_k``.

    Every sweep checks the sufficient-decrease inequality

        L(new) <= L(old) - lambda_w/2 |dw|^2 - tau1/2 |du|^2
                  - tau1/2 sum_{l<L} |dv_l|^2

    up to ``caps.descent_slack * (1 + |L|)`` and counts violations.

    Raises
    ------
    InnerSolverError
        If the final augmented Lagrangian value is not below ``theta``.
    """
    if eps_k <= 0:
        raise ValueError("eps_k must be positive")
    caps = caps or InnerCaps()
    theta = getattr(theta, "theta", theta)
    tol_wb = caps.wb_tol if caps.wb_tol is not None else min(1e-8, 0.1 * eps_k)
    L_old = augmented_lagrangian(state.params, state.aux, xi, rho, batch, hp)
    history = [L_old]
    violations, worst_gap, wb_its = 0, 0.0, 0
    residual = float("inf")
    params, aux = state.params, state.aux
    for j in range(1, caps.max_inner + 1):
        new_params, its = solve_wb(aux, xi, rho, batch, hp, tol_wb, caps.max_wb_iter,
                                   start=params, cache=cache)
        wb_its += its
        tau = compute_tau(new_params, rho, hp, caps.power_tol)
        new_aux = solve_vu(new_params, InnerState(new_params, aux), xi, rho, batch, hp, tau)
        L_new = augmented_lagrangian(new_params, new_aux, xi, rho, batch, hp)
        if not np.isfinite(L_new):
            raise InnerSolverError(f"non-finite augmented Lagrangian at sweep {j}")
        dw2 = _sq(new_params.weights, params.weights)
        db2 = _sq(new_params.biases, params.biases)
        du2 = _sq(new_aux.u, aux.u)
        dv2_inner = _sq(new_aux.v[:-1], aux.v[:-1])
        dv2 = dv2_inner + _sq(new_aux.v[-1:], aux.v[-1:])
        required = 0.5 * hp.lambda_w * dw2 + 0.5 * hp.tau1 * (du2 + dv2_inner)
        gap = (L_old - L_new) - required
        if gap < -caps.descent_slack * (1.0 + abs(L_new)):
            violations += 1
            worst_gap = min(worst_gap, gap)
            msg = f"descent inequality violated at sweep {j}: gap {gap:.3e}"
            if caps.raise_on_descent_violation:
                raise InnerSolverError(msg)
            log.debug(msg)
        params, aux, L_old = new_params, new_aux, L_new
        history.append(L_new)
        state = InnerState(params, aux, tau[1:], j, L_new,
                           tuple(float(np.sqrt(x)) for x in (dw2, db2, dv2, du2)))
        residual = kkt_residual(params, aux, xi, rho, batch, hp).residual_norm
        if residual <= eps_k:
            break
    ok = L_old < theta
    report = InnerReport(state.j, residual, ok, violations, worst_gap, history, wb_its)
    if not ok:
        raise InnerSolverError(
            f"augmented Lagrangian {L_old:.6e} left the level set theta={theta:.6e}"
        )
    return state, report


def lagrangian_lower_bound(xi, rho):
    """``-||xi||^2 / (2 rho)``, a lower bound on ``L_rho`` over the feasible cone."""
    xi = _xi_list(xi)
    return -float(sum(np.sum(X * X) for X in xi)) / (2.0 * rho)


__all__ = [
    "InnerCaps", "InnerState", "InnerReport", "InitSnapshot", "InnerSolverError",
    "solve_wb", "solve_vu", "compute_tau", "init_inner", "run_inner",
    "lagrangian_lower_bound",
]
