"""Augmented Lagrangian, primal residuals, level-set bound and KKT residual."""
from dataclasses import dataclass

import numpy as np

from .linalg import column_norms
from .network import objective_obar, objective_penalized


class InfeasibleAuxError(ValueError):
    """The auxiliary point violates ``v >= u`` / ``v >= alpha*u`` beyond tolerance."""


@dataclass
class Multipliers:
    xi: list

    @classmethod
    def zeros(cls, shape):
        return cls([np.zeros((shape.dims[l], shape.N)) for l in range(1, shape.L + 1)])

    def copy(self):
        return Multipliers([a.copy() for a in self.xi])

    def norm(self):
        return layered_norm(self.xi)


@dataclass
class KktCertificate:
    mu1: list
    mu2: list
    residual_norm: float
    wb_part: float
    vu_part: float


@dataclass(frozen=True)
class LevelSafeguard:
    theta: float


def layered_norm(arrs):
    return float(np.sqrt(sum(np.sum(A * A) for A in arrs)))


def _xi_list(xi):
    return xi.xi if isinstance(xi, Multipliers) else xi


def primal_residual(params, aux, batch):
    """``r_l = u_l - (W_l v_{l-1} + b_l)`` per layer, with ``v_0 = X``."""
    V_prev = [batch.X] + aux.v[:-1]
    return [U - (W @ Vp + b[:, None])
            for U, W, b, Vp in zip(aux.u, params.weights, params.biases, V_prev)]


def augmented_lagrangian(params, aux, xi, rho, batch, hp):
    """``O + <xi, r> + rho/2 ||r||^2`` with ``r`` the bilinear residual."""
    if rho <= 0:
        raise ValueError("rho must be positive")
    xi = _xi_list(xi)
    res = primal_residual(params, aux, batch)
    inner = sum(float(np.sum(X * R)) for X, R in zip(xi, res))
    sq = sum(float(np.sum(R * R)) for R in res)
    return objective_penalized(params, aux, batch, hp) + inner + 0.5 * rho * sq


def compute_theta(batch, params0, aux0, hp):
    """Level-set bound: ten times the larger of ``||Y||_F^2 / N`` and the
    regularized loss at the (feasible) starting point."""
    base = float(np.sum(batch.Y ** 2)) / batch.N
    theta = 10.0 * max(base, objective_obar(params0, aux0, batch, hp))
    if not theta > base:
        # Y == 0 and a zero starting objective
        theta = base + 1.0
    return LevelSafeguard(theta)


@dataclass
class SmoothGradient:
    """Gradient of the differentiable part of ``L_rho``.

    ``u`` excludes the ``-beta*sigma(u)`` term and ``W`` excludes the group
    norm; both are handled as subdifferentials by :func:`kkt_residual`.
    """

    W: list
    b: list
    v: list
    u: list


def smooth_gradient(params, aux, xi, rho, batch, hp):
    xi = _xi_list(xi)
    L = params.L
    N = batch.N
    beta = hp.beta_for(L)
    res = primal_residual(params, aux, batch)
    lam = [X + rho * R for X, R in zip(xi, res)]
    V_prev = [batch.X] + aux.v[:-1]
    gW = [-lam[l] @ V_prev[l].T for l in range(L)]
    gb = [-lam[l].sum(axis=1) for l in range(L)]
    gv = []
    for l in range(L):
        G = 2.0 * hp.lambda_v * aux.v[l] + beta[l]
        if l == L - 1:
            G = G + (2.0 / N) * (aux.v[l] - batch.Y)
        else:
            G = G - params.weights[l + 1].T @ lam[l + 1]
        gv.append(G)
    return SmoothGradient(gW, gb, gv, lam)


def _nnls2(av, au, act1, act2, alpha):
    """min over mu1, mu2 >= 0 (only where active) of
    ``(av - mu1 - mu2)^2 + (au + mu1 + alpha*mu2)^2``.

    Candidate enumeration over the four supports. Returns (value, mu1, mu2).
    """
    cands = []
    zero = np.zeros_like(av)
    cands.append((np.ones_like(av, dtype=bool), zero, zero))
    # mu1 alone along (-1, 1)
    m1 = np.maximum(0.0, (av - au) / 2.0)
    cands.append((act1, m1, zero))
    # mu2 alone along (-1, alpha)
    m2 = np.maximum(0.0, (av - alpha * au) / (1.0 + alpha * alpha))
    cands.append((act2, zero, m2))
    # both: solve mu1 + mu2 = av, mu1 + alpha mu2 = -au
    if alpha != 1.0:
        b2 = (av + au) / (1.0 - alpha)
        b1 = av - b2
        cands.append((act1 & act2 & (b1 >= 0) & (b2 >= 0), b1, b2))
    best = np.full_like(av, np.inf)
    mu1 = zero.copy()
    mu2 = zero.copy()
    for ok, c1, c2 in cands:
        val = (av - c1 - c2) ** 2 + (au + c1 + alpha * c2) ** 2
        take = ok & (val < best)
        best = np.where(take, val, best)
        mu1 = np.where(take, c1, mu1)
        mu2 = np.where(take, c2, mu2)
    return best, mu1, mu2


def vu_stationarity(gv, gu, v, u, beta_l, alpha, tol):
    """Per-coordinate squared distance of the ``(v, u)`` subgradient plus
    normal cone to zero.

    ``gv``/``gu`` are smooth gradients; ``-beta*sigma(u)`` contributes
    ``-beta`` (u > 0), ``-alpha*beta`` (u < 0) or the interval
    ``[-beta, -alpha*beta]`` at ``u = 0``.
    """
    scale = 1.0 + np.abs(u)
    act1 = np.abs(v - u) <= tol * scale
    act2 = np.abs(v - alpha * u) <= tol * scale
    kink = np.abs(u) <= tol
    lo, hi = -beta_l, -alpha * beta_l
    gu_fixed = gu + np.where(u > 0, lo, hi)
    best, mu1, mu2 = _nnls2(gv, gu_fixed, act1, act2, alpha)
    if np.any(kink):
        # u == 0: the u-subgradient t ranges over [lo, hi]
        for t in (lo, hi):
            val, c1, c2 = _nnls2(gv, gu + t, act1, act2, alpha)
            take = kink & (val < best)
            best = np.where(take, val, best)
            mu1 = np.where(take, c1, mu1)
            mu2 = np.where(take, c2, mu2)
        zero = np.zeros_like(gv)
        # t interior, no multiplier
        t0 = np.clip(-gu, lo, hi)
        val = gv ** 2 + (gu + t0) ** 2
        take = kink & (val < best)
        best = np.where(take, val, best)
        mu1 = np.where(take, zero, mu1)
        mu2 = np.where(take, zero, mu2)
        # t interior with multipliers: zero residual iff mu1 + mu2 = gv >= 0 and
        # some t = -gu - mu1 - alpha*mu2 lies in [lo, hi]
        t_a = -gu - gv          # all weight on mu1
        t_b = -gu - alpha * gv  # all weight on mu2
        t_lo, t_hi = np.minimum(t_a, t_b), np.maximum(t_a, t_b)
        both = act1 & act2
        reach = kink & (gv >= 0) & (t_hi >= lo) & (t_lo <= hi)
        ok1 = reach & act1 & (t_a >= lo) & (t_a <= hi)
        ok2 = reach & act2 & (t_b >= lo) & (t_b <= hi)
        okb = reach & both
        # weight on mu1 so that t lands inside [lo, hi]
        denom = np.where(t_a != t_b, t_a - t_b, 1.0)
        t_star = np.clip(t_b, lo, hi)
        w1 = np.clip((t_star - t_b) / denom, 0.0, 1.0)
        for ok, c1, c2 in ((ok1, gv, zero), (ok2, zero, gv), (okb, w1 * gv, (1 - w1) * gv)):
            take = ok & (best > 0)
            best = np.where(take, 0.0, best)
            mu1 = np.where(take, np.maximum(c1, 0.0), mu1)
            mu2 = np.where(take, np.maximum(c2, 0.0), mu2)
    return best, mu1, mu2


def kkt_residual(params, aux, xi, rho, batch, hp, tol=1e-10, cone_tol=1e-9):
    """Computable upper bound on ``dist(0, dL_rho + N_Omega3)``.

    The ``(w, b)`` part uses the exact subdifferential of the group norm; the
    ``(v, u)`` part minimizes, coordinate by coordinate, over the
    multipliers of the active cone constraints and over the subgradient of
    ``-beta*sigma`` at ``u = 0``.

    Raises
    ------
    InfeasibleAuxError
        If ``aux`` violates the cone constraints by more than ``cone_tol``.
    """
    viol = aux.cone_violation(hp.alpha)
    if viol > cone_tol:
        raise InfeasibleAuxError(f"cone constraints violated by {viol:.3e}")
    g = smooth_gradient(params, aux, xi, rho, batch, hp)
    beta = hp.beta_for(params.L)
    wb_sq = 0.0
    for W, GW, Gb in zip(params.weights, g.W, g.b):
        norms = column_norms(W)
        nz = norms > 0
        col = GW.copy()
        col[:, nz] += hp.lambda_w * W[:, nz] / norms[nz]
        wb_sq += float(np.sum(col[:, nz] ** 2))
        gnorm = column_norms(GW[:, ~nz])
        wb_sq += float(np.sum(np.maximum(0.0, gnorm - hp.lambda_w) ** 2))
        wb_sq += float(np.sum(Gb * Gb))
    vu_sq = 0.0
    mu1s, mu2s = [], []
    for l in range(params.L):
        val, m1, m2 = vu_stationarity(g.v[l], g.u[l], aux.v[l], aux.u[l], beta[l], hp.alpha, tol)
        vu_sq += float(np.sum(val))
        mu1s.append(m1)
        mu2s.append(m2)
    return KktCertificate(mu1s, mu2s, float(np.sqrt(wb_sq + vu_sq)),
                          float(np.sqrt(wb_sq)), float(np.sqrt(vu_sq)))
