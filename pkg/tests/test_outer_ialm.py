import csv
import io
import math

import numpy as np
import pytest

from ialam.inner_solver import InnerCaps
from ialam.network import DataBatch, HyperParams, NetworkShape, Params
from ialam.outer_ialm import (CSV_HEADER, IalmConfig, RunRecord, format_float, init_params,
                              records_to_csv, run_ialam, schedule_step, update_multipliers)
from ialam.penalty import Multipliers

from conftest import rng_for

ETA = dict(eta1=0.99, eta2=5.0 / 6.0, eta3=0.01, eta4=2.0 / 3.0)


def test_schedule_hold():
    for k in (1, 2):
        assert schedule_step(k, 2, rho=1.0, eps=0.1, feas_history=[5.0] * k, xi_norm=3.0,
                             **ETA) == (1.0, 0.1, "hold")


def test_schedule_tighten():
    rho, eps, br = schedule_step(3, 2, rho=1.0, eps=0.1, feas_history=[1.0, 1.0, 0.5],
                                 xi_norm=10.0, **ETA)
    assert br == "tighten" and rho == 1.0 and eps == math.sqrt(0.99) * 0.1
    # boundary: current == eta1 * window max still tightens
    _, _, br = schedule_step(3, 2, rho=1.0, eps=0.1, feas_history=[1.0, 0.2, 0.99],
                             xi_norm=0.0, **ETA)
    assert br == "tighten"


def test_schedule_escalate():
    rho, eps, br = schedule_step(3, 2, rho=1.0, eps=0.1, feas_history=[1.0, 1.0, 2.0],
                                 xi_norm=1.0, **ETA)
    assert br == "escalate"
    assert rho == max(1.0 / (5.0 / 6.0), 1.0 ** 1.01) == 1.2
    assert eps == (2.0 / 3.0) * 0.1
    # the multiplier term wins for a large xi
    rho, _, _ = schedule_step(3, 2, rho=1.0, eps=0.1, feas_history=[1.0, 1.0, 2.0],
                              xi_norm=10.0, **ETA)
    assert rho == 10.0 ** 1.01


def test_schedule_window_uses_last_gamma():
    # only the gamma entries before the current one matter
    hist = [100.0, 1.0, 1.0, 0.995]
    assert schedule_step(4, 2, rho=1.0, eps=0.1, feas_history=hist, xi_norm=0.0,
                         **ETA)[2] == "escalate"
    with pytest.raises(ValueError):
        schedule_step(4, 3, rho=1.0, eps=0.1, feas_history=[1.0, 1.0], xi_norm=0.0, **ETA)


def test_update_multipliers_examples():
    xi = Multipliers([np.zeros((2, 1))])
    out = update_multipliers(xi, 2.0, [np.array([[1.0], [-1.0]])])
    np.testing.assert_array_equal(out.xi[0], [[2.0], [-2.0]])
    xi = Multipliers([np.array([[0.3, -0.7]])])
    out = update_multipliers(xi, 5.0, [np.zeros((1, 2))])
    np.testing.assert_array_equal(out.xi[0], xi.xi[0])
    with pytest.raises(ValueError):
        update_multipliers(xi, 0.0, [np.zeros((1, 2))])


def test_config_defaults_and_validation():
    shape = NetworkShape((5, 4, 4, 3, 1), 500)
    cfg = IalmConfig().resolved(shape)
    assert (cfg.eta1, cfg.eta2, cfg.eta3, cfg.eta4, cfg.eps0) == (0.99, 5 / 6, 0.01, 2 / 3, 0.1)
    assert cfg.rho0 == 1 / 500 and cfg.gamma == 8
    assert IalmConfig.theory_mode().eta3 == 1.01
    for bad in (dict(eta1=1.0), dict(eta2=0.0), dict(eta3=0.0), dict(eps0=-1.0),
                dict(gamma=0), dict(max_outer=0), dict(init="xavier"), dict(max_wall_s=0.0)):
        with pytest.raises(ValueError):
            IalmConfig(**bad).resolved(shape)


def test_init_params():
    shape = NetworkShape((3, 4, 2), 50)
    p = init_params(shape, 3)
    p.check(shape)
    q = init_params(shape, 3)
    for a, b in zip(p.weights, q.weights):
        np.testing.assert_array_equal(a, b)
    assert all(not b.any() for b in p.biases)
    f = init_params(shape, 3, "fan_in")
    np.testing.assert_allclose(f.weights[0], p.weights[0] * 50 / np.sqrt(3), rtol=1e-14)
    with pytest.raises(ValueError):
        init_params(shape, 3, "bogus")


def test_format_float_roundtrip(rng):
    for x in rng.standard_normal(100) * 10.0 ** rng.integers(-300, 300, 100):
        assert float(format_float(x)) == x
    assert format_float(None) == ""
    assert format_float(float("nan")) == "nan"


def _toy(seed=0, N=30):
    rng = rng_for(seed)
    X = rng.standard_normal((2, N))
    Y = np.maximum(X[:1] - 0.5 * X[1:], 0.1 * (X[:1] - 0.5 * X[1:]))
    return DataBatch(X, Y), NetworkShape((2, 3, 1), N)


def test_run_terminates_after_one_iteration_with_huge_stop_eps():
    batch, shape = _toy()
    res = run_ialam(batch, HyperParams.defaults(shape), IalmConfig(stop_eps=1e9), 0,
                    dims=shape.dims)
    assert len(res.records) == 1 and res.stop_reason == "eps"


def test_run_is_deterministic():
    batch, shape = _toy()
    cfg = IalmConfig(max_outer=15)
    a = run_ialam(batch, HyperParams.defaults(shape), cfg, 4, dims=shape.dims)
    b = run_ialam(batch, HyperParams.defaults(shape), cfg, 4, dims=shape.dims)
    assert records_to_csv(a.records) == records_to_csv(b.records)
    for x, y in zip(a.params.weights, b.params.weights):
        np.testing.assert_array_equal(x, y)


def test_run_records_and_csv():
    batch, shape = _toy()
    seen = []
    res = run_ialam(batch, HyperParams.defaults(shape), IalmConfig(max_outer=12), 1,
                    dims=shape.dims, test_batch=batch, callback=seen.append)
    assert [r.k for r in res.records] == list(range(1, len(res.records) + 1))
    assert seen == res.records
    text = records_to_csv(res.records)
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == CSV_HEADER and len(rows) == len(res.records) + 1
    assert all(r[CSV_HEADER.index("wall_s")] == "" for r in rows[1:])
    for r, rec in zip(rows[1:], res.records):
        assert float(r[CSV_HEADER.index("TrainErr")]) == rec.TrainErr
    timed = list(csv.reader(io.StringIO(records_to_csv(res.records, with_time=True))))
    assert all(float(r[CSV_HEADER.index("wall_s")]) >= 0 for r in timed[1:])


def test_run_escalates_and_stops_on_rho():
    batch, shape = _toy()
    cfg = IalmConfig(stop_rho_factor=2.0, gamma=1, eta1=1e-6, max_outer=200,
                     caps=InnerCaps(max_inner=5))
    res = run_ialam(batch, HyperParams.defaults(shape), cfg, 0, dims=shape.dims)
    assert res.stop_reason == "rho"
    rhos = [r.rho for r in res.records]
    assert rhos[0] == 1 / 30 and rhos == sorted(rhos)


def test_run_stops_on_time_budget():
    batch, shape = _toy()
    res = run_ialam(batch, HyperParams.defaults(shape), IalmConfig(max_wall_s=1e-9), 0,
                    dims=shape.dims)
    assert res.stop_reason == "time" and len(res.records) == 1


def test_run_needs_dims_or_params():
    batch, shape = _toy()
    with pytest.raises(ValueError):
        run_ialam(batch, HyperParams.defaults(shape), IalmConfig(), 0)
    p0 = Params.zeros(shape)
    res = run_ialam(batch, HyperParams.defaults(shape), IalmConfig(max_outer=2), 0, params0=p0)
    assert len(res.records) == 2


def test_run_fits_a_small_problem():
    # fan-in init on a tiny teacher problem with a small regularizer
    batch, shape = _toy(N=40)
    hp = HyperParams(0.1, 1e-4, 1e-5, [1.0 / 40] * 2, 1e-3)
    res = run_ialam(batch, hp, IalmConfig(init="fan_in", max_outer=60, caps=InnerCaps(max_inner=100)),
                    0, dims=shape.dims)
    last = res.records[-1]
    assert last.TrainErr < 0.1 * np.mean(batch.Y ** 2)
    assert last.FeasVi2 < 1e-6
    assert sum(r.descent_violations for r in res.records) == 0


def test_record_row_types():
    rec = RunRecord(1, 0.5, 0.1, 1.0, 2.0, 3.0, float("nan"), 0.0, 0.0, 1e-3, 7, 1.5, 0.2)
    row = rec.csv_row()
    assert row[0] == "1" and row[CSV_HEADER.index("inner_iters")] == "7"
    assert row[CSV_HEADER.index("TestErr")] == "nan"
