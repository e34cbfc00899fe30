"""Closed-form kernels for the alternating minimization blocks.

All kernels are vectorized: the scalar arguments may be numpy arrays of a
common shape, and every coordinate is handled independently.
"""
from dataclasses import dataclass

import numpy as np

from .linalg import column_norms
from .penalty import _xi_list


@dataclass
class ScalarCoeffs:
    """Coefficients of one (or an array of) two-variable subproblems

        min  c*(r - max(s, alpha*s)) + d1/2 (r - d3/d1)^2 + d2/2 (s - d4/d2)^2
        s.t. r >= s,  r >= alpha*s
    """

    d1: np.ndarray
    d2: np.ndarray
    d3: np.ndarray
    d4: np.ndarray
    c: np.ndarray
    alpha: float

    def __post_init__(self):
        for name in ("d1", "d2", "c"):
            if np.any(np.asarray(getattr(self, name)) <= 0):
                raise ValueError(f"{name} must be strictly positive")

    def objective(self, r, s):
        a = self.alpha
        return (self.c * (r - np.maximum(s, a * s))
                + 0.5 * self.d1 * (r - self.d3 / self.d1) ** 2
                + 0.5 * self.d2 * (s - self.d4 / self.d2) ** 2)


def prox_group_lasso(M, threshold):
    """Column-wise block soft thresholding, prox of ``threshold * ||M||_{2,1}``."""
    if threshold < 0:
        raise ValueError("threshold must be nonnegative")
    M = np.asarray(M, dtype=float)
    if threshold == 0:
        return M.copy()
    norms = column_norms(M)
    scale = np.zeros_like(norms)
    nz = norms > 0
    scale[nz] = np.maximum(0.0, 1.0 - threshold / norms[nz])
    return M * scale


def _pick_closest(p, q, d1, d2, cands):
    """Among ``(feasible, r, s)`` candidates keep the feasible one closest in
    the ``diag(d1, d2)`` metric. Earlier candidates win ties."""
    best_r = np.zeros(np.broadcast(p, q, d1, d2).shape)
    best_s = np.zeros_like(best_r)
    best_d = np.full_like(best_r, np.inf)
    for ok, r, s in cands:
        dist = d1 * (r - p) ** 2 + d2 * (s - q) ** 2
        take = ok & (dist < best_d)
        best_r = np.where(take, r, best_r)
        best_s = np.where(take, s, best_s)
        best_d = np.where(take, dist, best_d)
    return best_r, best_s


def project_cone_pos(p, q, d1, d2):
    """Weighted projection of ``(p, q)`` onto ``{(r, s): r >= s, s >= 0}``."""
    p, q, d1, d2 = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (p, q, d1, d2)))
    t = (d1 * p + d2 * q) / (d1 + d2)
    zero = np.zeros_like(p)
    r, s = _pick_closest(p, q, d1, d2, [
        ((q >= 0) & (p >= q), p, q),
        (t >= 0, t, t),
        (p >= 0, p, zero),
        (np.ones_like(p, dtype=bool), zero, zero),
    ])
    if r.ndim == 0:
        return float(r), float(s)
    return r, s


def project_cone_neg(p, q, d1, d2, alpha):
    """Weighted projection of ``(p, q)`` onto ``{(r, s): r >= alpha*s, s <= 0}``."""
    p, q, d1, d2 = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (p, q, d1, d2)))
    s_line = np.minimum((alpha * d1 * p + d2 * q) / (alpha * alpha * d1 + d2), 0.0)
    zero = np.zeros_like(p)
    r, s = _pick_closest(p, q, d1, d2, [
        ((q <= 0) & (p >= alpha * q), p, q),
        (np.ones_like(p, dtype=bool), alpha * s_line, s_line),
        (p >= 0, p, zero),
        (np.ones_like(p, dtype=bool), zero, zero),
    ])
    if r.ndim == 0:
        return float(r), float(s)
    return r, s


def solve_scalar_vu(coef):
    """Global minimizer ``(r, s)`` of the two-variable subproblem.

    The objective is convex on each half-plane ``s >= 0`` and ``s <= 0``;
    both restricted problems are weighted projections, and the branch with
    the lower objective wins (the ``s >= 0`` branch on ties).
    """
    d1, d2, d3, d4, c = (np.asarray(x, dtype=float) for x in
                         (coef.d1, coef.d2, coef.d3, coef.d4, coef.c))
    a = coef.alpha
    r1, s1 = project_cone_pos((d3 - c) / d1, (d4 + c) / d2, d1, d2)
    r2, s2 = project_cone_neg((d3 - c) / d1, (d4 + a * c) / d2, d1, d2, a)
    f1 = coef.objective(r1, s1)
    f2 = coef.objective(r2, s2)
    second = (f1 - f2) > 1e-14 * (1.0 + np.abs(f1))
    r = np.where(second, r2, r1)
    s = np.where(second, s2, s1)
    if r.ndim == 0:
        return float(r), float(s)
    return r, s


def layer_coeffs(params, aux, xi, rho, tau, batch, hp):
    """Assemble the scalar subproblem coefficients for every coordinate.

    Parameters
    ----------
    params : Params
        The freshly updated ``(W, b)`` block.
    aux : AuxState
        The previous ``(v, u)`` iterate (linearization point).
    xi : Multipliers or list of arrays
        Same layout as ``aux.u``.
    rho : float
    tau : sequence of float
        ``tau[l-1]`` is the proximal weight of layer ``l``; ``tau[0]`` must
        be ``hp.tau1``.

    Returns
    -------
    list of ScalarCoeffs
        Entry ``l-1`` holds ``(N_l, N)`` arrays; ``r`` is ``v_l`` and ``s``
        is ``u_l``.
    """
    xi = _xi_list(xi)
    L = params.L
    N = batch.N
    beta = hp.beta_for(L)
    Ws, bs = params.weights, params.biases
    V_prev = [batch.X] + aux.v[:-1]
    # g_l: bilinear residual at the new (W, b) and old (v, u)
    g = [aux.u[l] - (Ws[l] @ V_prev[l] + bs[l][:, None]) for l in range(L)]
    out = []
    for l in range(L):
        U, V = aux.u[l], aux.v[l]
        if l == 0:
            d2 = np.full(U.shape, rho + hp.tau1)
            d4 = rho * (Ws[0] @ batch.X + bs[0][:, None]) + hp.tau1 * U - xi[0]
        else:
            d2 = np.full(U.shape, tau[l])
            d4 = tau[l] * U - rho * g[l] - xi[l]
        if l < L - 1:
            t_next = tau[l + 1]
            d1 = np.full(V.shape, 2.0 * hp.lambda_v + t_next)
            d3 = t_next * V + Ws[l + 1].T @ (xi[l + 1] + rho * g[l + 1])
        else:
            d1 = np.full(V.shape, 2.0 / N + 2.0 * hp.lambda_v)
            d3 = (2.0 / N) * batch.Y
        out.append(ScalarCoeffs(d1, d2, d3, d4, np.full(U.shape, beta[l]), hp.alpha))
    return out


def assemble_scalar_coeffs(params, aux, xi, rho, tau, batch, hp, n, l, i):
    """Coefficients of the single subproblem for sample ``n``, layer ``l``
    (1-based) and unit ``i``."""
    L = params.L
    if not 1 <= l <= L:
        raise IndexError(f"layer {l} out of range 1..{L}")
    if not 0 <= n < batch.N or not 0 <= i < params.weights[l - 1].shape[0]:
        raise IndexError(f"(n={n}, i={i}) out of range for layer {l}")
    co = layer_coeffs(params, aux, xi, rho, tau, batch, hp)[l - 1]
    return ScalarCoeffs(float(co.d1[i, n]), float(co.d2[i, n]), float(co.d3[i, n]),
                        float(co.d4[i, n]), float(co.c[i, n]), co.alpha)
