import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import logistic_mle, ols
from penaipw.data import Dataset, standardize
from penaipw.estimators import (DATA_ESTIMATOR_IDS, ESTIMATOR_IDS, AteEstimate, EstimationError,
                                EstimatorSpec, estimate_aipw, estimate_farrell, estimate_gcomp,
                                estimate_ipw, estimate_naive, run_estimator, run_estimators)
from penaipw.penreg import LINEAR, fit_unpenalized


def _data(n=200, p=6, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, p))
    eta = 0.6 * x[:, 0] - 0.6 * x[:, 1]
    z = (rng.uniform(size=n) < 1 / (1 + np.exp(-eta))).astype(float)
    y = 0.5 * z + x[:, 0] + x[:, 1] + 0.5 * x[:, 2] + rng.normal(size=n)
    return Dataset(x, z, y)


arm_data = st.integers(0, 10_000).map(lambda s: _data(n=40, p=3, seed=s))


@settings(max_examples=50, deadline=None)
@given(arm_data, st.integers(0, 10_000))
def test_aipw_equals_gcomp_under_exact_outcome_predictions(d, seed):
    rng = np.random.default_rng(seed)
    ps = rng.uniform(0.05, 0.95, size=d.n)
    m1 = rng.normal(size=d.n)
    m0 = rng.normal(size=d.n)
    m1[d.z == 1] = d.y[d.z == 1]
    m0[d.z == 0] = d.y[d.z == 0]
    est = estimate_aipw(d, ps, m1, m0)
    assert est.theta_hat == pytest.approx(np.mean(m1) - np.mean(m0), abs=1e-10)


@settings(max_examples=50, deadline=None)
@given(arm_data, st.floats(0.01, 0.99))
def test_ipw_with_constant_scores_is_naive(d, e):
    assert estimate_ipw(d, np.full(d.n, e)).theta_hat == pytest.approx(
        estimate_naive(d).theta_hat, abs=1e-12)


def _relabel(d):
    return Dataset(d.x, 1 - d.z, d.y)


@settings(max_examples=50, deadline=None)
@given(arm_data, st.integers(0, 10_000))
def test_relabel_antisymmetry_of_formulas(d, seed):
    rng = np.random.default_rng(seed)
    ps = rng.uniform(0.05, 0.95, size=d.n)
    m1, m0 = rng.normal(size=(2, d.n))
    r = _relabel(d)
    assert estimate_naive(r).theta_hat == pytest.approx(-estimate_naive(d).theta_hat, abs=1e-10)
    assert estimate_ipw(r, 1 - ps).theta_hat == pytest.approx(-estimate_ipw(d, ps).theta_hat,
                                                             abs=1e-10)
    assert estimate_aipw(r, 1 - ps, m0, m1).theta_hat == pytest.approx(
        -estimate_aipw(d, ps, m1, m0).theta_hat, abs=1e-10)


@settings(max_examples=30, deadline=None)
@given(arm_data, st.floats(-100, 100), st.integers(0, 10_000))
def test_outcome_shift_leaves_formulas_unchanged(d, c, seed):
    rng = np.random.default_rng(seed)
    ps = rng.uniform(0.05, 0.95, size=d.n)
    m1, m0 = rng.normal(size=(2, d.n))
    s = Dataset(d.x, d.z, d.y + c)
    assert estimate_ipw(s, ps).theta_hat == pytest.approx(estimate_ipw(d, ps).theta_hat, abs=1e-9)
    assert estimate_aipw(s, ps, m1 + c, m0 + c).theta_hat == pytest.approx(
        estimate_aipw(d, ps, m1, m0).theta_hat, abs=1e-9)


def test_pipeline_relabel_antisymmetry():
    d = _data()
    ids = ("naive", "IPW-OAL", "AIPW-Las-Las", "AIPW-OAL-MCP", "gComp-AdL")
    specs = [EstimatorSpec(i) for i in ids]
    a = run_estimators(specs, d)
    b = run_estimators(specs, _relabel(d))
    for i in ids:
        assert b[i].theta_hat == pytest.approx(-a[i].theta_hat, abs=1e-6), i


def test_pipeline_outcome_shift_invariance():
    d = _data(seed=1)
    ids = ("IPW-OAL", "AIPW-Las-Las", "AIPW-OAL-AdL", "AIPW-Farrell")
    specs = [EstimatorSpec(i) for i in ids]
    a = run_estimators(specs, d)
    b = run_estimators(specs, Dataset(d.x, d.z, d.y + 7.0))
    for i in ids:
        assert b[i].theta_hat == pytest.approx(a[i].theta_hat, abs=1e-6), i


def test_gcomp_with_least_squares():
    d = _data()
    est = estimate_gcomp(d, lambda x, y: fit_unpenalized(x, y, LINEAR))
    t = d.z == 1
    b1 = ols(d.x[t], d.y[t])
    b0 = ols(d.x[~t], d.y[~t])
    want = (b1[0] - b0[0]) + d.x.mean(axis=0) @ (b1[1] - b0[1])
    assert est.theta_hat == pytest.approx(want, abs=1e-10)


def test_farrell_intercept_only_is_naive():
    rng = np.random.default_rng(5)
    n = 120
    x = rng.normal(size=(n, 4))
    z = np.r_[np.ones(50), np.zeros(70)]
    y = rng.normal(size=n)
    # project out arm indicators and within-arm outcomes: every lasso is empty
    basis = np.column_stack([z, 1 - z, z * y, (1 - z) * y])
    x -= basis @ np.linalg.lstsq(basis, x, rcond=None)[0]
    d = Dataset(x, z, y)
    est = estimate_farrell(d)
    assert est.diagnostics["ps"] == [] and est.diagnostics["m1"] == [] and est.diagnostics["m0"] == []
    assert est.theta_hat == pytest.approx(estimate_naive(d).theta_hat, abs=1e-10)


def test_farrell_refit_oracle():
    d = _data(n=300, seed=2)
    est = estimate_farrell(d)
    sp, s1, s0 = est.diagnostics["ps"], est.diagnostics["m1"], est.diagnostics["m0"]
    assert sp and s1 and s0
    xs, _ = standardize(d)
    t = d.z == 1
    a, b = logistic_mle(xs[:, sp], d.z)
    ps = 1 / (1 + np.exp(-(a + xs[:, sp] @ b)))
    c1, g1 = ols(xs[t][:, s1], d.y[t])
    c0, g0 = ols(xs[~t][:, s0], d.y[~t])
    m1 = c1 + xs[:, s1] @ g1
    m0 = c0 + xs[:, s0] @ g0
    want = np.mean(d.z * d.y / ps - (d.z - ps) / ps * m1) - np.mean(
        (1 - d.z) * d.y / (1 - ps) + (d.z - ps) / (1 - ps) * m0)
    assert est.theta_hat == pytest.approx(want, abs=1e-8)


def test_farrell_separation_goes_extreme():
    rng = np.random.default_rng(6)
    n = 100
    x = rng.normal(size=(n, 3))
    z = (x[:, 0] > 0).astype(float)
    y = z + x[:, 0] + rng.normal(size=n)
    est = estimate_farrell(Dataset(x, z, y))
    assert est.extreme


def test_extreme_flag():
    assert AteEstimate(1e9).extreme
    assert AteEstimate(np.nan).extreme
    assert not AteEstimate(-3.0).extreme


def test_registry():
    assert len(ESTIMATOR_IDS) == 13
    assert "AIPW-Targ" not in DATA_ESTIMATOR_IDS and len(DATA_ESTIMATOR_IDS) == 12
    with pytest.raises(ValueError, match="unknown estimator"):
        EstimatorSpec("AIPW-Ridge")
    with pytest.raises(ValueError):
        EstimatorSpec("naive", ps_clip=0.6)
    d = _data(n=80)
    with pytest.raises(EstimationError):
        run_estimator(EstimatorSpec("AIPW-Targ"), d)
    out = run_estimators([EstimatorSpec("AIPW-Targ"), EstimatorSpec("naive")], d, errors="record")
    assert isinstance(out["AIPW-Targ"], EstimationError)
    assert out["naive"].theta_hat == pytest.approx(estimate_naive(d).theta_hat)


def test_targeted_uses_known_columns():
    d = _data(seed=3)
    est = run_estimator(EstimatorSpec("AIPW-Targ", known_sets=(0, 1, 2)), d)
    assert est.diagnostics["ps"] == [0, 1, 2]
    assert est.diagnostics["m1"] == [0, 1, 2]
    assert abs(est.theta_hat - 0.5) < 0.5


def test_clipping_applies_to_scores():
    d = _data(seed=4)
    est = run_estimator(EstimatorSpec("IPW-OAL", ps_clip=0.3), d)
    assert est.ps.min() >= 0.3 and est.ps.max() <= 0.7


def test_aipw_rejects_boundary_scores():
    d = _data(n=20)
    with pytest.raises(ValueError):
        estimate_aipw(d, np.r_[np.full(19, 0.5), 1.0], np.zeros(20), np.zeros(20))


def test_constant_column_is_ignored():
    d = _data(seed=7)
    x = np.column_stack([d.x, np.ones(d.n)])
    ids = ("IPW-OAL", "gComp-AdL", "AIPW-Las-Las", "AIPW-OAL-AEN", "AIPW-Farrell")
    a = run_estimators([EstimatorSpec(i) for i in ids], d)
    b = run_estimators([EstimatorSpec(i) for i in ids], Dataset(x, d.z, d.y))
    for i in ids:
        assert b[i].theta_hat == pytest.approx(a[i].theta_hat, abs=1e-8), i
