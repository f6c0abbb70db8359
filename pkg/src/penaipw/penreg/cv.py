"""K-fold cross-validation and the two-stage/iterated lasso variants."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .path import (LINEAR, LOGISTIC, FitConfig, FittedModel, PenaltySpec, _check_xy,
                   fit_path, fit_unpenalized)

# probabilities are clipped to this band when scoring held-out deviance
_PROB_CLIP = 1e-5
# initial coefficients smaller than this exclude their covariate
ZERO_COEF = 1e-12


@dataclass
class CVCurve:
    """Cross-validated loss along a lambda grid.

    Attributes
    ----------
    lambdas : ndarray
        Grid of the full-data path, descending.
    cvm : ndarray
        Fold-size weighted mean held-out loss per lambda.
    cvsd : ndarray
        Standard error of ``cvm`` across folds.
    idx_min, idx_1se : int
        Position of the minimum and of the one-standard-error choice.
    fold_id : ndarray of int
        Fold label of every row.
    """

    lambdas: np.ndarray
    cvm: np.ndarray
    cvsd: np.ndarray
    idx_min: int
    idx_1se: int
    fold_id: np.ndarray

    def index(self, rule: str) -> int:
        return self.idx_min if rule == "min" else self.idx_1se

    @property
    def best_loss(self) -> float:
        return float(self.cvm[self.idx_min])


def make_folds(n: int, k: int, seed: int) -> np.ndarray:
    """Assign rows to ``k`` folds through a seeded permutation.

    Fold sizes differ by at most one.
    """
    if k > n:
        raise ValueError(f"cannot split {n} rows into {k} folds")
    perm = np.random.default_rng(seed).permutation(n)
    fold_id = np.empty(n, dtype=np.int64)
    fold_id[perm] = np.arange(n) % k
    return fold_id


def _folds_ok(y, fold_id, k, family):
    if family != LOGISTIC:
        return True
    for f in range(k):
        train = y[fold_id != f]
        if train.min() == train.max():
            return False
    return True


def _heldout_loss(family, y, pred):
    if family == LINEAR:
        return (y - pred) ** 2
    p = np.clip(pred, _PROB_CLIP, 1 - _PROB_CLIP)
    return -2.0 * (y * np.log(p) + (1 - y) * np.log1p(-p))


def cv_curve_stats(fold_losses, fold_sizes):
    """Weighted mean and standard error of per-fold mean losses.

    Parameters
    ----------
    fold_losses : ndarray, shape (k, n_lambda)
        Mean held-out loss of each fold at each lambda.
    fold_sizes : ndarray, shape (k,)
    """
    w = np.asarray(fold_sizes, dtype=float)
    k = len(w)
    cvm = w @ fold_losses / w.sum()
    var = w @ (fold_losses - cvm) ** 2 / w.sum()
    return cvm, np.sqrt(var / (k - 1))


def choose_lambda(cvm, cvsd):
    """Return (index of minimum, index of the one-standard-error rule).

    The lambdas are descending, so the first index meeting the bound is the
    largest such lambda.
    """
    i_min = int(np.argmin(cvm))
    bound = cvm[i_min] + cvsd[i_min]
    i_1se = int(np.flatnonzero(cvm <= bound)[0])
    return i_min, i_1se


def cross_validate(x, y, family: str, penalty: PenaltySpec = PenaltySpec(),
                   cfg: FitConfig = FitConfig()):
    """Choose lambda by K-fold cross-validation and return the full-data fit.

    The full-data path fixes the lambda grid; every fold refits that grid on
    its training rows (with its own internal standardization) and is scored
    by squared error or binomial deviance on its held-out rows.

    Returns
    -------
    model : FittedModel
        Full-data fit at the lambda picked by ``cfg.lambda_rule``.
    curve : CVCurve
    """
    x, y = _check_xy(x, y, family)
    n = len(y)
    k = cfg.cv_folds
    if n < k:
        raise ValueError(f"cross-validation needs n >= cv_folds ({n} < {k})")
    path = fit_path(x, y, family, penalty, cfg)
    grid = np.array([m.lambda_used for m in path])

    fold_id = make_folds(n, k, cfg.cv_seed)
    if not _folds_ok(y, fold_id, k, family):
        fold_id = make_folds(n, k, cfg.cv_seed + 1)
        if not _folds_ok(y, fold_id, k, family):
            raise ValueError("a cross-validation training fold contains a single class")

    losses = np.empty((k, len(grid)))
    sizes = np.empty(k)
    for f in range(k):
        test = fold_id == f
        fits = fit_path(x[~test], y[~test], family, penalty, cfg, lambdas=grid,
                        stop_saturated=True)
        for j, m in enumerate(fits):
            losses[f, j] = _heldout_loss(family, y[test], m.predict(x[test])).mean()
        # a saturated fold path ends early; its last fit stands for the rest
        losses[f, len(fits):] = losses[f, len(fits) - 1]
        sizes[f] = test.sum()

    cvm, cvsd = cv_curve_stats(losses, sizes)
    i_min, i_1se = choose_lambda(cvm, cvsd)
    curve = CVCurve(grid, cvm, cvsd, i_min, i_1se, fold_id)
    model = path[curve.index(cfg.lambda_rule)]
    model.info["cv_loss"] = float(cvm[curve.index(cfg.lambda_rule)])
    return model, curve


def _std_coef(x, coef):
    """Coefficients expressed per standard deviation of each column."""
    return np.asarray(coef) * np.asarray(x, dtype=float).std(axis=0)


def inverse_weights(b, power: float = 1.0, offset: float = 0.0, zero: float = ZERO_COEF):
    """Penalty factors ``1 / (|b| + offset)**power``.

    With ``offset = 0`` coefficients below ``zero`` in magnitude get an
    infinite factor, which removes that covariate from the fit.
    """
    ab = np.abs(np.asarray(b, dtype=float))
    out = np.full(ab.shape, np.inf)
    keep = ab >= zero if offset == 0 else np.ones(ab.shape, dtype=bool)
    out[keep] = 1.0 / (ab[keep] + offset) ** power
    return out


def _intercept_only(x, y, family):
    ybar = float(y.mean())
    icpt = ybar if family == LINEAR else float(np.log(ybar / (1 - ybar)))
    return FittedModel(family, icpt, np.zeros(x.shape[1]))


def fit_lasso(x, y, family: str, cfg: FitConfig = FitConfig()) -> FittedModel:
    return cross_validate(x, y, family, PenaltySpec("l1"), cfg)[0]


def fit_adaptive_lasso(x, y, family: str, cfg: FitConfig = FitConfig()) -> FittedModel:
    """Lasso with factors ``1/|b_j|`` from an unpenalized initial fit.

    The initial coefficients are measured per standard deviation of each
    column, so the procedure is invariant to rescaling a covariate.
    """
    x, y = _check_xy(x, y, family)
    n = x.shape[0]
    # constant columns cannot enter any fit; they get an infinite factor
    live = x.std(axis=0) > 0
    if live.sum() >= n:
        raise ValueError("adaptive weights require an initial unpenalized fit (needs n > p)")
    init = fit_unpenalized(x[:, live], y, family)
    if "rank_deficient" in init.flags:
        raise ValueError("adaptive weights require an initial unpenalized fit "
                         "(design is rank deficient)")
    coef = np.zeros(x.shape[1])
    coef[live] = init.coef
    factors = inverse_weights(_std_coef(x, coef))
    model = cross_validate(x, y, family, PenaltySpec("l1", factors), cfg)[0]
    model.info["factors"] = factors
    return model


def fit_elastic_net(x, y, family: str, cfg: FitConfig = FitConfig(),
                    mix: float = 0.5) -> FittedModel:
    if not 0 < mix < 1:
        raise ValueError(f"elastic net mix must lie in (0, 1), got {mix}")
    return cross_validate(x, y, family, PenaltySpec("elastic_net", mix=mix), cfg)[0]


def fit_adaptive_elastic_net(x, y, family: str, cfg: FitConfig = FitConfig(),
                             mix_grid=(0.2, 0.4, 0.6, 0.8)) -> FittedModel:
    """Two-stage adaptive elastic net tuned over ``mix_grid``.

    For each mix value an elastic-net CV fit supplies factors
    ``1/|b_j|`` (zero coefficients excluded) for a second elastic-net CV
    fit. The (mix, lambda) pair with the smallest CV loss wins; lambda is
    therefore always chosen by the minimum rule, whatever ``cfg`` says.
    """
    x, y = _check_xy(x, y, family)
    if len(mix_grid) == 0:
        raise ValueError("mix_grid must not be empty")
    cfg_min = cfg.replace(lambda_rule="min")
    best = None
    for mix in mix_grid:
        stage1 = fit_elastic_net(x, y, family, cfg_min, mix)
        factors = inverse_weights(_std_coef(x, stage1.coef))
        if not np.isfinite(factors).any():
            model = _intercept_only(x, y, family)
            model.flags = ("empty_first_stage",)
            loss = np.inf
        else:
            model, curve = cross_validate(x, y, family,
                                          PenaltySpec("elastic_net", factors, mix=mix), cfg_min)
            loss = curve.best_loss
        model.info["mix"] = mix
        if best is None or loss < best[0]:
            best = (loss, model)
    return best[1]


def fit_lsp(x, y, family: str, cfg: FitConfig = FitConfig(), delta: float = 1e-4,
            l_max: int = 4) -> FittedModel:
    """Log-sum penalty by iteratively reweighted lasso.

    Starts from unit factors and refits ``l_max`` times with factors
    ``1/(|b_j| + delta)`` taken from the previous fit, so ``l_max = 0`` is the
    plain lasso.
    """
    if l_max < 0:
        raise ValueError("l_max must be >= 0")
    x, y = _check_xy(x, y, family)
    factors = np.ones(x.shape[1])
    model = None
    for _ in range(l_max + 1):
        model = cross_validate(x, y, family, PenaltySpec("l1", factors), cfg)[0]
        model.info["factors"] = factors
        factors = inverse_weights(_std_coef(x, model.coef), offset=delta)
    return model
