import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import logistic_mle, ols
from penaipw.penreg import (LINEAR, LOGISTIC, FitConfig, PenaltySpec, cross_validate, fit_lasso,
                            fit_adaptive_lasso, fit_elastic_net, fit_lsp, fit_path,
                            fit_unpenalized, inverse_weights, make_folds, mcp_univariate,
                            objective, scad_univariate, soft_threshold)
from penaipw.penreg.cv import choose_lambda, cv_curve_stats


def _linear_data(n=100, p=8, seed=0, noise=1.0):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, p)) * rng.uniform(0.5, 3, size=p) + rng.normal(size=p)
    beta = np.zeros(p)
    beta[:3] = [1.5, -1.0, 0.5]
    y = 0.3 + x @ beta + noise * rng.normal(size=n)
    return x, y


def _logistic_data(n=200, p=6, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, p))
    eta = -0.2 + x[:, 0] - 0.7 * x[:, 1]
    y = (rng.uniform(size=n) < 1 / (1 + np.exp(-eta))).astype(float)
    return x, y


def _std(x):
    return (x - x.mean(axis=0)) / x.std(axis=0)


# orthogonal, mean-zero, unit population sd columns: the penalized fit
# separates into independent univariate problems
ORTHO = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float)


def test_top_of_path_is_empty_and_next_is_not():
    x, y = _linear_data()
    path = fit_path(x, y, LINEAR)
    assert np.all(path[0].coef == 0)
    assert path[0].intercept == pytest.approx(y.mean())
    assert np.any(path[1].coef != 0)
    grad = np.abs(_std(x).T @ (y - y.mean())) / len(y)
    assert path[0].lambda_used == pytest.approx(grad.max(), rel=1e-12)


def test_lambda_zero_matches_least_squares():
    x, y = _linear_data(n=50, p=5)
    m = fit_path(x, y, LINEAR, lambdas=[0.0])[0]
    b0, b = ols(x, y)
    np.testing.assert_allclose(m.coef, b, atol=1e-8)
    assert m.intercept == pytest.approx(b0, abs=1e-8)


def test_unpenalized_fits_match_oracles():
    x, y = _linear_data(n=50, p=5)
    m = fit_unpenalized(x, y, LINEAR)
    np.testing.assert_allclose(m.coef, ols(x, y)[1], atol=1e-10)
    x, y = _logistic_data()
    m = fit_unpenalized(x, y, LOGISTIC)
    b0, b = logistic_mle(x, y)
    np.testing.assert_allclose(m.coef, b, atol=1e-8)
    assert m.intercept == pytest.approx(b0, abs=1e-8)


def test_logistic_tiny_lambda_approaches_mle():
    x, y = _logistic_data()
    m = fit_path(x, y, LOGISTIC, lambdas=[1e-9], cfg=FitConfig(tol=1e-12))[0]
    np.testing.assert_allclose(m.coef, logistic_mle(x, y)[1], atol=1e-5)


def test_unpenalized_flags():
    x = np.column_stack([np.arange(6.0), 2 * np.arange(6.0)])
    assert "rank_deficient" in fit_unpenalized(x, np.arange(6.0), LINEAR).flags
    xs = np.arange(10.0).reshape(-1, 1)
    assert not fit_unpenalized(xs, (xs[:, 0] > 4.5).astype(float), LOGISTIC).converged


def test_univariate_closed_form():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(40, 1))
    y = 2 * x[:, 0] + rng.normal(size=40)
    xs = _std(x)[:, 0]
    v = xs @ (y - y.mean()) / 40
    for lam in (0.05, 0.5, abs(v) * 0.9, abs(v) * 1.1):
        m = fit_path(x, y, LINEAR, lambdas=[lam])[0]
        assert m.coef[0] * x.std() == pytest.approx(soft_threshold(v, lam), abs=1e-10)


@pytest.mark.parametrize("kind,thr,param", [("l1", None, None), ("scad", scad_univariate, 3.7),
                                            ("mcp", mcp_univariate, 3.0)])
def test_orthogonal_design_separates(kind, thr, param):
    y = np.array([2.0, -0.5, 1.3, 0.1])
    z = ORTHO.T @ (y - y.mean()) / 4
    for lam in (0.1, 0.3, 0.6, 1.0):
        pen = PenaltySpec(kind) if kind == "l1" else (
            PenaltySpec(kind, a=param) if kind == "scad" else PenaltySpec(kind, gamma=param))
        m = fit_path(ORTHO, y, LINEAR, pen, lambdas=[lam])[0]
        want = [soft_threshold(v, lam) if thr is None else thr(v, lam, param) for v in z]
        np.testing.assert_allclose(m.coef, want, atol=1e-10)


def test_kkt_along_linear_path():
    x, y = _linear_data(n=80, p=10, seed=4)
    xs = _std(x)
    factors = np.array([1, 2, 0.5, 1, 1, 3, 1, 1, 0, 1], dtype=float)
    path = fit_path(x, y, LINEAR, PenaltySpec("l1", factors), FitConfig(tol=1e-10))
    assert len(path) > 10
    for m in path:
        beta = m.coef * x.std(axis=0)
        r = y - m.predict(x)
        grad = xs.T @ r / len(y)
        lam = m.lambda_used
        for j in range(10):
            bound = lam * factors[j]
            if beta[j] != 0:
                assert grad[j] == pytest.approx(bound * np.sign(beta[j]), abs=1e-6)
            else:
                assert abs(grad[j]) <= bound + 1e-6
        assert abs(r.mean()) < 1e-8


def test_kkt_logistic():
    x, y = _logistic_data()
    xs = _std(x)
    for m in fit_path(x, y, LOGISTIC, cfg=FitConfig(tol=1e-10, n_lambda=20)):
        r = y - m.predict(x)
        grad = xs.T @ r / len(y)
        beta = m.coef * x.std(axis=0)
        nz = beta != 0
        np.testing.assert_allclose(grad[nz], m.lambda_used * np.sign(beta[nz]), atol=1e-5)
        assert np.all(np.abs(grad[~nz]) <= m.lambda_used + 1e-5)
        assert abs(r.mean()) < 1e-5


def test_infinite_factor_excludes_column():
    x, y = _linear_data()
    factors = np.ones(8)
    factors[0] = np.inf
    for m in fit_path(x, y, LINEAR, PenaltySpec("l1", factors)):
        assert m.coef[0] == 0.0


def test_zero_factor_is_unpenalized():
    x, y = _linear_data()
    factors = np.ones(8)
    factors[5] = 0.0
    assert fit_path(x, y, LINEAR, PenaltySpec("l1", factors))[0].coef[5] != 0


@pytest.mark.parametrize("kind", ["l1", "elastic_net", "scad", "mcp"])
def test_objective_never_increases_within_a_fit(kind):
    x, y = _linear_data(n=60, p=12, seed=5)
    path = fit_path(x, y, LINEAR, PenaltySpec(kind), FitConfig(n_lambda=30), record_objective=True)
    for m in path:
        trace = np.asarray(m.info["objective"])
        assert np.all(np.diff(trace) <= 1e-12 * (1 + np.abs(trace[:-1])))
        assert trace[-1] == pytest.approx(objective(x, y, LINEAR, PenaltySpec(kind), m), rel=1e-9)


def test_folds_balanced_and_deterministic():
    for n, k in ((10, 3), (101, 10), (7, 7)):
        f = make_folds(n, k, seed=11)
        counts = np.bincount(f, minlength=k)
        assert counts.max() - counts.min() <= 1
        np.testing.assert_array_equal(f, make_folds(n, k, seed=11))
    assert not np.array_equal(make_folds(50, 5, 1), make_folds(50, 5, 2))
    with pytest.raises(ValueError):
        make_folds(3, 4, 0)


def test_curve_statistics_hand_values():
    losses = np.array([[1.0, 2.0], [3.0, 2.0], [2.0, 5.0]])
    cvm, cvsd = cv_curve_stats(losses, [2, 2, 1])
    assert cvm[0] == pytest.approx((2 + 6 + 2) / 5)
    var0 = (2 * (1 - 2) ** 2 + 2 * (3 - 2) ** 2 + 0) / 5
    assert cvsd[0] == pytest.approx(np.sqrt(var0 / 2))
    assert cvm[1] == pytest.approx((4 + 4 + 5) / 5)
    i_min, i_1se = choose_lambda(np.array([3.0, 2.5, 2.0, 2.2]), np.array([.1, .1, .6, .1]))
    assert (i_min, i_1se) == (2, 1)


def test_leave_one_out_matches_hat_matrix():
    x = np.array([[0.1, 1.0], [0.5, -1.0], [1.2, 0.3], [2.0, 0.7], [2.9, -0.4], [3.5, 1.1]])
    y = np.array([0.3, 1.1, 1.4, 2.5, 2.7, 4.0])
    _, curve = cross_validate(x, y, LINEAR, PenaltySpec("none"),
                              FitConfig(cv_folds=6, lambdas=(0.0,)))
    design = np.column_stack([np.ones(6), x])
    hat = design @ np.linalg.solve(design.T @ design, design.T)
    e = y - hat @ y
    loo = np.mean((e / (1 - np.diag(hat))) ** 2)
    assert curve.cvm[0] == pytest.approx(loo, rel=1e-10)


def test_cross_validation_deterministic():
    x, y = _linear_data()
    cfg = FitConfig(cv_seed=7, cv_folds=5)
    a, ca = cross_validate(x, y, LINEAR, cfg=cfg)
    b, cb = cross_validate(x, y, LINEAR, cfg=cfg)
    np.testing.assert_array_equal(a.coef, b.coef)
    np.testing.assert_array_equal(ca.cvm, cb.cvm)
    assert ca.idx_1se <= ca.idx_min


def test_logistic_cv_single_class_fold_rejected():
    x = np.arange(12.0).reshape(-1, 1)
    y = np.zeros(12)
    y[0] = 1
    with pytest.raises(ValueError, match="single class"):
        cross_validate(x, y, LOGISTIC, cfg=FitConfig(cv_folds=3))


def test_elastic_net_near_lasso_limit():
    x, y = _linear_data()
    lam = 0.05
    en = fit_path(x, y, LINEAR, PenaltySpec("elastic_net", mix=0.999), lambdas=[lam])[0]
    la = fit_path(x, y, LINEAR, PenaltySpec("l1"), lambdas=[lam])[0]
    np.testing.assert_allclose(en.coef, la.coef, atol=2e-3)


def test_elastic_net_splits_duplicated_columns():
    x, y = _linear_data(n=80, p=3)
    dup = np.column_stack([x, x[:, 0]])
    m = fit_path(dup, y, LINEAR, PenaltySpec("elastic_net", mix=0.5), lambdas=[0.1],
                 cfg=FitConfig(tol=1e-12))[0]
    assert m.coef[0] == pytest.approx(m.coef[3], rel=1e-6)
    assert m.coef[0] != 0
    with pytest.raises(ValueError):
        fit_elastic_net(x, y, LINEAR, mix=1.0)


def test_inverse_weights():
    w = inverse_weights([0.0, 2.0, -0.5, 1e-14])
    np.testing.assert_array_equal(w, [np.inf, 0.5, 2.0, np.inf])
    np.testing.assert_allclose(inverse_weights([0.0, 1.0], offset=1e-4), [1e4, 1 / 1.0001])


def test_adaptive_lasso_requires_initial_fit():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError, match="needs n > p"):
        fit_adaptive_lasso(rng.normal(size=(5, 6)), rng.normal(size=5), LINEAR)


def test_adaptive_lasso_uses_scaled_initial_factors():
    x, y = _linear_data(n=120)
    cfg = FitConfig(cv_folds=5)
    m = fit_adaptive_lasso(x, y, LINEAR, cfg)
    init = fit_unpenalized(x, y, LINEAR)
    np.testing.assert_allclose(m.info["factors"], 1 / np.abs(init.coef * x.std(axis=0)))
    assert set(m.selected) >= {0, 1}


def test_lsp_reduces_to_lasso_and_reweights():
    x, y = _linear_data(n=90)
    cfg = FitConfig(cv_folds=5)
    lasso = fit_lasso(x, y, LINEAR, cfg)
    lsp0 = fit_lsp(x, y, LINEAR, cfg, l_max=0)
    np.testing.assert_array_equal(lsp0.coef, lasso.coef)
    lsp1 = fit_lsp(x, y, LINEAR, cfg, delta=1e-4, l_max=1)
    f = lsp1.info["factors"]
    dropped = lasso.coef == 0
    np.testing.assert_allclose(f[dropped], 1e4)
    np.testing.assert_allclose(f[~dropped], 1 / (np.abs(lasso.coef * x.std(axis=0))[~dropped] + 1e-4))


def test_penalty_validation():
    with pytest.raises(ValueError):
        PenaltySpec("scad", a=2.0)
    with pytest.raises(ValueError):
        PenaltySpec("mcp", gamma=1.0)
    with pytest.raises(ValueError):
        PenaltySpec("l1", factors=[-1.0])
    with pytest.raises(ValueError):
        PenaltySpec("ridge")
    x, y = _logistic_data()
    with pytest.raises(ValueError):
        fit_path(x, y, LOGISTIC, PenaltySpec("scad"))
    with pytest.raises(ValueError):
        fit_path(x, y + 2, LOGISTIC)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.01, 100), st.integers(0, 7), st.integers(0, 1000))
def test_rescaling_a_column_rescales_its_coefficient(c, j, seed):
    x, y = _linear_data(n=60, seed=seed)
    xc = x.copy()
    xc[:, j] *= c
    a = fit_path(x, y, LINEAR, cfg=FitConfig(n_lambda=15, tol=1e-12))
    b = fit_path(xc, y, LINEAR, cfg=FitConfig(n_lambda=15, tol=1e-12))
    assert len(a) == len(b)
    for ma, mb in zip(a, b):
        assert mb.coef[j] * c == pytest.approx(ma.coef[j], abs=1e-7)
        assert mb.intercept == pytest.approx(ma.intercept, abs=1e-7)
