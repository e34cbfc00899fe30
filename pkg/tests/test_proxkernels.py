import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ialam.inner_solver import compute_tau
from ialam.network import leaky_relu
from ialam.penalty import augmented_lagrangian
from ialam.proxkernels import (ScalarCoeffs, assemble_scalar_coeffs, layer_coeffs,
                               project_cone_neg, project_cone_pos, prox_group_lasso,
                               solve_scalar_vu)

from conftest import random_aux, random_instance, rng_for
from oracles import cone_grid_oracle, phi, scalar_grid_oracle


def test_prox_group_lasso_examples():
    M = np.array([[3.0], [4.0]])
    np.testing.assert_array_equal(prox_group_lasso(M, 5.0), [[0.0], [0.0]])
    np.testing.assert_allclose(prox_group_lasso(M, 2.5), [[1.5], [2.0]], rtol=1e-15)
    out = prox_group_lasso(M, 0.0)
    np.testing.assert_array_equal(out, M)
    assert out is not M
    with pytest.raises(ValueError):
        prox_group_lasso(M, -1.0)


def test_prox_group_lasso_is_a_prox(rng):
    # optimality: the output minimizes t*||X||_{2,1} + 1/2 ||X - M||^2
    M = rng.standard_normal((3, 6)) * 2
    t = 1.3
    X = prox_group_lasso(M, t)
    f = lambda Z: t * np.linalg.norm(Z, axis=0).sum() + 0.5 * np.sum((Z - M) ** 2)
    for _ in range(200):
        assert f(X) <= f(X + 1e-3 * rng.standard_normal(M.shape)) + 1e-12


def test_project_cone_pos_examples():
    assert project_cone_pos(2.0, 1.0, 1.0, 1.0) == (2.0, 1.0)
    assert project_cone_pos(1.0, 2.0, 1.0, 1.0) == (1.5, 1.5)
    ref = cone_grid_oracle(-1.0, -1.0, 1.0, 1.0, lambda r, s: (r >= s) & (s >= 0))
    np.testing.assert_allclose(project_cone_pos(-1.0, -1.0, 1.0, 1.0), ref, atol=1e-6)
    np.testing.assert_allclose(ref, (0.0, 0.0), atol=1e-6)


def test_project_cone_neg_examples():
    assert project_cone_neg(1.0, -1.0, 1.0, 1.0, 0.5) == (1.0, -1.0)
    ref = cone_grid_oracle(-1.0, 0.5, 1.0, 1.0, lambda r, s: (r >= 0.5 * s) & (s <= 0))
    np.testing.assert_allclose(project_cone_neg(-1.0, 0.5, 1.0, 1.0, 0.5), ref, atol=1e-6)
    np.testing.assert_allclose(ref, (0.0, 0.0), atol=1e-6)
    for a in (0.0, 0.01, 0.5, 0.99):
        assert project_cone_neg(0.0, -2.0, 1.0, 1.0, a) == (0.0, -2.0)


def test_projections_match_grid_oracle_weighted(rng):
    for _ in range(4):
        p, q = rng.uniform(-2.5, 2.5, 2)
        d1, d2 = rng.uniform(0.2, 3.0, 2)
        a = 0.3
        ref = cone_grid_oracle(p, q, d1, d2, lambda r, s: (r >= s) & (s >= 0))
        np.testing.assert_allclose(project_cone_pos(p, q, d1, d2), ref, atol=2e-6)
        ref = cone_grid_oracle(p, q, d1, d2, lambda r, s: (r >= a * s) & (s <= 0))
        np.testing.assert_allclose(project_cone_neg(p, q, d1, d2, a), ref, atol=2e-6)


def _random_points(rng, n):
    p, q = rng.uniform(-10, 10, (2, n))
    d1, d2 = rng.uniform(1e-3, 10, (2, n))
    return p, q, d1, d2


@pytest.mark.parametrize("alpha", [0.0, 0.01, 0.5, 0.99])
def test_projection_properties(rng, alpha):
    p, q, d1, d2 = _random_points(rng, 10_000)
    for proj, ok in ((lambda *a: project_cone_pos(*a), lambda r, s: (r >= s) & (s >= 0)),
                     (lambda *a: project_cone_neg(*a, alpha),
                      lambda r, s: (r >= alpha * s) & (s <= 0))):
        r, s = proj(p, q, d1, d2)
        assert ok(r, s).all()
        r2, s2 = proj(r, s, d1, d2)
        np.testing.assert_array_equal(r2, r)
        np.testing.assert_array_equal(s2, s)
        # firm nonexpansiveness in the diag(d1, d2) metric against a perturbed partner
        p2, q2 = p + rng.standard_normal(p.size), q + rng.standard_normal(p.size)
        rr, ss = proj(p2, q2, d1, d2)
        lhs = d1 * (r - rr) ** 2 + d2 * (s - ss) ** 2
        inner = d1 * (r - rr) * (p - p2) + d2 * (s - ss) * (q - q2)
        assert np.all(lhs <= inner * (1 + 1e-12) + 1e-12)


def test_solve_scalar_examples():
    co = ScalarCoeffs(1.0, 1.0, 0.0, 0.0, 1.0, 0.5)
    r, s = solve_scalar_vu(co)
    ref = scalar_grid_oracle(1.0, 1.0, 0.0, 0.0, 1.0, 0.5, lo=-2, hi=2)
    assert (r, s) == pytest.approx((0.0, 0.0), abs=1e-12)
    assert co.objective(r, s) == pytest.approx(0.0, abs=1e-14)
    assert co.objective(r, s) <= ref[2][0] + 1e-12
    co = ScalarCoeffs(1.0, 1.0, 5.0, 5.0, 1.0, 0.5)
    ref = scalar_grid_oracle(1.0, 1.0, 5.0, 5.0, 1.0, 0.5, lo=-2, hi=6)
    assert solve_scalar_vu(co) == pytest.approx((5.0, 5.0), abs=1e-12)
    assert (ref[0][0], ref[1][0]) == pytest.approx((5.0, 5.0), abs=1e-6)


def test_solve_scalar_small_c_limit():
    a, b = 2.0, 0.7  # interior: a > b > 0
    for c in (1e-4, 1e-8):
        r, s = solve_scalar_vu(ScalarCoeffs(2.0, 3.0, 2.0 * a, 3.0 * b, c, 0.1))
        assert (r, s) == pytest.approx((a, b), abs=10 * c)


def test_solve_scalar_tie_prefers_nonnegative_branch():
    # alpha=0, d2=1, c=1, d4=-c/2: s=+0.5 and s=-0.5 both give phi equal at r=4
    co = ScalarCoeffs(1.0, 1.0, 5.0, -0.5, 1.0, 0.0)
    assert co.objective(4.0, 0.5) == co.objective(4.0, -0.5)
    assert solve_scalar_vu(co) == (4.0, 0.5)


def test_scalar_coeffs_validation():
    with pytest.raises(ValueError):
        ScalarCoeffs(0.0, 1.0, 0.0, 0.0, 1.0, 0.1)
    with pytest.raises(ValueError):
        ScalarCoeffs(1.0, 1.0, 0.0, 0.0, -1.0, 0.1)


def test_solve_scalar_vs_oracle_sample(rng):
    n = 400
    d1, d2, c = rng.uniform(1e-3, 10, (3, n))
    d3, d4 = rng.uniform(-10, 10, (2, n))
    for alpha in (0.0, 0.01, 0.1, 0.5, 0.99):
        r, s = solve_scalar_vu(ScalarCoeffs(d1, d2, d3, d4, c, alpha))
        assert np.all(r >= s) and np.all(r >= alpha * s)
        _, _, ref = scalar_grid_oracle(d1, d2, d3, d4, c, alpha)
        assert np.all(phi(d1, d2, d3, d4, c, alpha, r, s) <= ref + 1e-8)


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-3, 10), st.floats(1e-3, 10), st.floats(-10, 10), st.floats(-10, 10),
       st.floats(1e-3, 10), st.sampled_from([0.0, 0.01, 0.1, 0.5, 0.99]))
def test_solve_scalar_local_optimality(d1, d2, d3, d4, c, alpha):
    co = ScalarCoeffs(d1, d2, d3, d4, c, alpha)
    r, s = solve_scalar_vu(co)
    assert r >= s and r >= alpha * s
    f0 = co.objective(r, s)
    for dr, ds in ((1e-4, 0), (-1e-4, 0), (0, 1e-4), (0, -1e-4), (1e-4, 1e-4), (-1e-4, -1e-4)):
        rr, ss = r + dr, s + ds
        if rr >= ss and rr >= alpha * ss:
            assert f0 <= co.objective(rr, ss) + 1e-12 * (1 + abs(f0))


def test_assemble_examples():
    rng = rng_for(0)
    shape, hp, params, aux, xi, batch = random_instance(rng, (2, 3), 1, alpha=0.1)
    hp.lambda_v = 1e-300
    co = assemble_scalar_coeffs(params, aux, xi, 1.0, [hp.tau1], batch, hp, 0, 1, 2)
    assert co.d1 == pytest.approx(2.0) and co.d3 == pytest.approx(2 * batch.Y[2, 0])
    params.weights[0][:] = 0.0
    params.biases[0][:] = 0.0
    hp.tau1 = 1e-300
    xi.xi[0][:] = 0.0
    co = assemble_scalar_coeffs(params, aux, xi, 1.0, [hp.tau1], batch, hp, 0, 1, 0)
    assert co.d2 == pytest.approx(1.0) and co.d4 == pytest.approx(0.0, abs=1e-290)
    with pytest.raises(IndexError):
        assemble_scalar_coeffs(params, aux, xi, 1.0, [hp.tau1], batch, hp, 0, 2, 0)
    with pytest.raises(IndexError):
        assemble_scalar_coeffs(params, aux, xi, 1.0, [hp.tau1], batch, hp, 1, 1, 0)


def prox_term(params, aux_new, aux_old, tau, rho, hp):
    """Proximal term that turns the coupled (v, u) problem into the
    separable one: exact for layer 1, linearized plus tau_l for layers >= 2."""
    P = 0.5 * hp.tau1 * np.sum((aux_new.u[0] - aux_old.u[0]) ** 2)
    for l in range(1, params.L):
        dv = aux_new.v[l - 1] - aux_old.v[l - 1]
        du = aux_new.u[l] - aux_old.u[l]
        P += 0.5 * tau[l] * (np.sum(dv ** 2) + np.sum(du ** 2))
        P -= 0.5 * rho * np.sum((du - params.weights[l] @ dv) ** 2)
    return float(P)


def separability_spread(seed, n_points=100):
    """Std over random (v, u) of sum(phi) - (L_rho + P), and the mean."""
    rng = rng_for(seed)
    L = int(rng.integers(1, 4))
    dims = tuple(int(d) for d in rng.integers(1, 5, size=L + 1))
    N = int(rng.integers(1, 6))
    alpha = float(rng.choice([0.0, 0.01, 0.1, 0.5]))
    shape, hp, params, aux_old, xi, batch = random_instance(rng, dims, N, alpha=alpha)
    rho = float(rng.uniform(0.1, 2.0))
    tau = compute_tau(params, rho, hp)
    coeffs = layer_coeffs(params, aux_old, xi, rho, tau, batch, hp)
    diffs = []
    for _ in range(n_points):
        aux = random_aux(rng, shape, alpha)
        total = sum(float(np.sum(phi(co.d1, co.d2, co.d3, co.d4, co.c, alpha, V, U)))
                    for co, V, U in zip(coeffs, aux.v, aux.u))
        ref = augmented_lagrangian(params, aux, xi, rho, batch, hp) + \
            prox_term(params, aux, aux_old, tau, rho, hp)
        diffs.append(total - ref)
    d = np.array(diffs)
    return float(d.std(ddof=1)), float(d.mean())


@pytest.mark.parametrize("seed", range(5))
def test_separability_identity(seed):
    std, mean = separability_spread(seed)
    assert std <= 1e-9 * (1 + abs(mean))


def test_penalty_term_coefficient():
    # c multiplies r - sigma(s) exactly as beta multiplies v - sigma(u)
    co = ScalarCoeffs(1.0, 1.0, 0.0, 0.0, 0.3, 0.2)
    r, s = 1.0, -1.5
    assert co.objective(r, s) == pytest.approx(
        0.3 * (r - leaky_relu(s, 0.2)) + 0.5 * r ** 2 + 0.5 * s ** 2)
