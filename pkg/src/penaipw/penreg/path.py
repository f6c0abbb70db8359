"""Pathwise penalized linear and logistic regression."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit

from . import _cd

LINEAR = "linear"
LOGISTIC = "logistic"
FAMILIES = (LINEAR, LOGISTIC)
PENALTY_KINDS = ("none", "l1", "elastic_net", "scad", "mcp")

# glmnet-style path termination: stop once the fit explains nearly all
# deviance or stops improving; never before the fifth lambda
_DEV_RATIO_MAX = 0.999
_DEV_CHANGE_MIN = 1e-5
_MIN_PATH = 5


@dataclass(frozen=True)
class PenaltySpec:
    """Penalty family, its shape parameter, and per-coefficient multipliers.

    ``factors[j] = inf`` excludes coefficient ``j``; ``None`` means all ones.
    ``mix`` is the L1 share of the elastic net, ``a`` the SCAD concavity and
    ``gamma`` the MCP concavity.
    """

    kind: str = "l1"
    factors: Optional[np.ndarray] = None
    mix: float = 0.5
    a: float = 3.7
    gamma: float = 3.0

    def __post_init__(self):
        if self.kind not in PENALTY_KINDS:
            raise ValueError(f"unknown penalty kind {self.kind!r}")
        if self.kind == "elastic_net" and not 0 < self.mix < 1:
            raise ValueError(f"elastic net mix must lie in (0, 1), got {self.mix}")
        if self.kind == "scad" and self.a <= 2:
            raise ValueError(f"SCAD requires a > 2, got {self.a}")
        if self.kind == "mcp" and self.gamma <= 1:
            raise ValueError(f"MCP requires gamma > 1, got {self.gamma}")
        if self.factors is not None:
            f = np.asarray(self.factors, dtype=float).ravel()
            if np.any(np.isnan(f)) or np.any(f < 0):
                raise ValueError("penalty factors must be non-negative")
            object.__setattr__(self, "factors", f)

    def with_factors(self, factors) -> "PenaltySpec":
        return PenaltySpec(self.kind, factors, self.mix, self.a, self.gamma)

    def resolved_factors(self, p: int) -> np.ndarray:
        if self.factors is None:
            return np.ones(p)
        if len(self.factors) != p:
            raise ValueError(f"expected {p} penalty factors, got {len(self.factors)}")
        return self.factors.copy()

    @property
    def l1_share(self) -> float:
        return self.mix if self.kind == "elastic_net" else 1.0


@dataclass(frozen=True)
class FitConfig:
    """Solver and cross-validation controls.

    ``min_ratio=None`` picks 1e-4 when n > p and 1e-2 otherwise. Passing
    ``lambdas`` replaces the automatic grid and disables early path
    termination.
    """

    n_lambda: int = 100
    min_ratio: Optional[float] = None
    lambdas: Optional[tuple] = None
    tol: float = 1e-7
    max_sweeps: int = 100_000
    cv_folds: int = 10
    cv_seed: int = 0
    lambda_rule: str = "one_se"
    max_outer: int = 100
    weight_floor: float = 1e-5

    def __post_init__(self):
        if self.n_lambda < 1:
            raise ValueError("n_lambda must be >= 1")
        if self.min_ratio is not None and not 0 < self.min_ratio < 1:
            raise ValueError("min_ratio must lie in (0, 1)")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.cv_folds < 2:
            raise ValueError("cv_folds must be >= 2")
        if self.lambda_rule not in ("min", "one_se"):
            raise ValueError(f"lambda_rule must be 'min' or 'one_se', got {self.lambda_rule!r}")
        if self.lambdas is not None:
            lam = tuple(float(v) for v in self.lambdas)
            if any(v < 0 for v in lam):
                raise ValueError("lambdas must be non-negative")
            object.__setattr__(self, "lambdas", lam)

    def replace(self, **kw) -> "FitConfig":
        from dataclasses import replace
        return replace(self, **kw)


@dataclass
class FittedModel:
    """Coefficients on the original covariate scale plus fit metadata."""

    family: str
    intercept: float
    coef: np.ndarray
    lambda_used: float = 0.0
    converged: bool = True
    sweeps: int = 0
    flags: tuple = ()
    info: dict = field(default_factory=dict)

    @property
    def selected(self) -> np.ndarray:
        return np.flatnonzero(self.coef != 0)

    def linear_predictor(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.intercept + x @ self.coef

    def predict(self, x) -> np.ndarray:
        """Mean response: fitted values (linear) or probabilities (logistic)."""
        eta = self.linear_predictor(x)
        if self.family == LOGISTIC:
            return expit(eta)
        return eta


def _check_xy(x, y, family):
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}")
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    y = np.asarray(y, dtype=float).ravel()
    if x.shape[0] != len(y):
        raise ValueError("x and y have different numbers of rows")
    if family == LOGISTIC and not np.all((y == 0) | (y == 1)):
        raise ValueError("logistic response must be 0/1")
    return x, y


def _deviance(family, y, mu):
    if family == LINEAR:
        return float(np.sum((y - mu) ** 2))
    with np.errstate(divide="ignore", invalid="ignore"):
        ll = np.where(y == 1, np.log(mu), np.log1p(-mu))
    return float(-2.0 * np.sum(ll))


class _Standardized:
    """Internal column scaling shared by the path solver and its callers."""

    def __init__(self, x):
        self.mean = x.mean(axis=0)
        sd = x.std(axis=0)
        self.constant = ~(sd > 1e-12 * np.maximum(1.0, np.abs(self.mean)))
        self.sd = np.where(self.constant, 1.0, sd)
        xs = (x - self.mean) / self.sd
        xs[:, self.constant] = 0.0
        self.xs = np.asfortranarray(xs)

    def to_original(self, b0, beta):
        coef = beta / self.sd
        return b0 - float(self.mean @ coef), coef


def lambda_max(xs, y, family, factors, l1_share=1.0):
    """Smallest lambda at which every penalized coefficient is zero."""
    n = len(y)
    grad = np.abs(xs.T @ (y - y.mean())) / n
    ok = np.isfinite(factors) & (factors > 0)
    if not ok.any():
        return 0.0
    return float(np.max(grad[ok] / factors[ok]) / l1_share)


def lambda_grid(lmax, n, p, cfg: FitConfig):
    ratio = cfg.min_ratio if cfg.min_ratio is not None else (1e-4 if n > p else 1e-2)
    if cfg.n_lambda == 1:
        return np.array([lmax])
    return lmax * np.logspace(0.0, np.log10(ratio), cfg.n_lambda)


def _kind_code(penalty: PenaltySpec):
    if penalty.kind == "scad":
        return _cd.KIND_SCAD, penalty.a
    if penalty.kind == "mcp":
        return _cd.KIND_MCP, penalty.gamma
    return _cd.KIND_EN, 0.0


def _penalty_weights(lam, penalty, factors, free):
    f = np.where(free, factors, 0.0)
    if penalty.kind == "none":
        return np.zeros_like(f), np.zeros_like(f)
    share = penalty.l1_share
    return lam * f * share, lam * f * (1.0 - share)


def fit_path(x, y, family: str, penalty: PenaltySpec = PenaltySpec(),
             cfg: FitConfig = FitConfig(), lambdas: Optional[Sequence[float]] = None,
             record_objective: bool = False, stop_saturated: bool = False):
    """Fit a warm-started regularization path, largest lambda first.

    Covariates are standardized internally (population sd) and the
    coefficients are mapped back to the scale of ``x``. The intercept is never
    penalized. Constant columns are excluded like infinite-factor columns.

    Parameters
    ----------
    x : array-like, shape (n, p)
    y : array-like, shape (n,)
        Real response for ``family="linear"``, 0/1 for ``"logistic"``.
    family : {"linear", "logistic"}
    penalty : PenaltySpec
    cfg : FitConfig
    lambdas : sequence of float, optional
        Explicit grid, fitted in the given order without early termination.
        Overrides ``cfg.lambdas``.
    record_objective : bool
        Linear family only: store the objective after every sweep (and every
        direct support solve) of each fit in ``model.info["objective"]``.
    stop_saturated : bool
        Logistic family only: end an explicit-grid path once the fit explains
        more than 99.9% of the null deviance. Used for CV folds, whose
        remaining grid points then reuse the last fit.

    Returns
    -------
    list of FittedModel
    """
    x, y = _check_xy(x, y, family)
    n, p = x.shape
    factors = penalty.resolved_factors(p)
    if family == LOGISTIC and penalty.kind in ("scad", "mcp"):
        raise ValueError("SCAD and MCP are only supported for the linear family")
    std = _Standardized(x)
    xs = std.xs
    free = np.isfinite(factors) & ~std.constant
    if penalty.kind == "none":
        free = ~std.constant.copy()

    explicit = lambdas if lambdas is not None else cfg.lambdas
    if explicit is not None:
        grid = np.asarray(explicit, dtype=float)
        early_stop = False
        lmax = float(grid[0]) if len(grid) else 0.0
    else:
        lmax = lambda_max(xs, y, family, np.where(free, factors, np.inf), penalty.l1_share)
        # a gradient at rounding level means no covariate can enter the model
        if lmax <= 1e-10 * max(1.0, float(np.std(y))):
            lmax = 1.0
        grid = lambda_grid(lmax, n, p, cfg)
        early_stop = True

    kind, param = _kind_code(penalty)
    if family == LINEAR:
        return _linear_path(x, y, std, grid, penalty, factors, free, kind, param, cfg,
                            early_stop, lmax, record_objective)
    return _logistic_path(x, y, std, grid, penalty, factors, free, cfg, early_stop, lmax,
                          stop_saturated)


def _linear_path(x, y, std, grid, penalty, factors, free, kind, param, cfg,
                 early_stop, lmax, record):
    n, p = x.shape
    xs = std.xs
    ybar = float(y.mean())
    yc = y - ybar
    G = np.ascontiguousarray(xs.T @ xs / n)
    c = xs.T @ yc / n
    f1, f2 = _penalty_weights(1.0, penalty, factors, free)
    betas, sweeps, conv, n_fit, trace, ends = _cd.gaussian_path(
        G, c, float(yc @ yc / n), np.asarray(grid, dtype=float), f1, f2, free, kind, param,
        cfg.tol, cfg.max_sweeps, early_stop, _MIN_PATH, _DEV_RATIO_MAX, _DEV_CHANGE_MIN,
        xs, yc, record)
    models = []
    start = 0
    for k in range(n_fit):
        icpt, coef = std.to_original(ybar, betas[k])
        m = FittedModel(LINEAR, float(icpt), coef, float(grid[k]), bool(conv[k]), int(sweeps[k]))
        m.info["lambda_max"] = lmax
        if record:
            m.info["objective"] = trace[start:ends[k]].copy()
            start = ends[k]
        models.append(m)
    return models


def _logistic_path(x, y, std, grid, penalty, factors, free, cfg, early_stop, lmax,
                   stop_saturated=False):
    n, p = x.shape
    xa = np.ascontiguousarray(np.column_stack([np.ones(n), std.xs]))
    free_a = np.concatenate([[True], free])
    theta = np.zeros(p + 1)
    ybar = float(y.mean())
    if 0 < ybar < 1:
        theta[0] = np.log(ybar / (1 - ybar))
    null_dev = _deviance(LOGISTIC, y, np.full(n, ybar))
    f1, f2 = _penalty_weights(1.0, penalty, factors, free)
    f1 = np.concatenate([[0.0], f1])
    f2 = np.concatenate([[0.0], f2])
    models = []
    prev_ratio = 0.0
    for k, lam in enumerate(grid):
        if free.any():
            sweeps, converged = _cd.logistic_irls(
                xa, y, theta, lam * f1, lam * f2, free_a, cfg.tol, cfg.max_sweeps,
                cfg.max_outer, cfg.weight_floor)
        else:
            sweeps, converged = 0, True
        icpt, coef = std.to_original(theta[0], theta[1:])
        m = FittedModel(LOGISTIC, float(icpt), coef, float(lam), bool(converged), int(sweeps))
        m.info["lambda_max"] = lmax
        models.append(m)
        if (early_stop or stop_saturated) and null_dev > 0:
            ratio = 1.0 - _deviance(LOGISTIC, y, m.predict(x)) / null_dev
            if stop_saturated and ratio > _DEV_RATIO_MAX:
                break
            if early_stop and k + 1 >= _MIN_PATH and (
                    ratio > _DEV_RATIO_MAX or ratio - prev_ratio < _DEV_CHANGE_MIN * ratio):
                break
            prev_ratio = ratio
    return models


def fit_unpenalized(x, y, family: str, tol: float = 1e-8, max_iter: int = 100) -> FittedModel:
    """Ordinary least squares or maximum-likelihood logistic regression.

    The logistic fit is plain Newton-Raphson without step control or
    probability clipping, so separable data drives coefficients toward
    infinity; such fits come back with ``converged=False``.
    Least squares on a rank-deficient design returns the minimum-norm
    solution flagged ``"rank_deficient"``.
    """
    x, y = _check_xy(x, y, family)
    n, p = x.shape
    design = np.column_stack([np.ones(n), x])
    if family == LINEAR:
        theta, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
        flags = () if rank == p + 1 else ("rank_deficient",)
        return FittedModel(LINEAR, float(theta[0]), theta[1:].copy(), 0.0, rank == p + 1, 1, flags)

    theta = np.zeros(p + 1)
    ybar = y.mean()
    if 0 < ybar < 1:
        theta[0] = np.log(ybar / (1 - ybar))
    converged = False
    it = 0
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        for it in range(1, max_iter + 1):
            mu = expit(design @ theta)
            w = mu * (1 - mu)
            hess = design.T @ (design * w[:, None])
            grad = design.T @ (y - mu)
            try:
                step = np.linalg.solve(hess, grad)
            except np.linalg.LinAlgError:
                break
            if not np.all(np.isfinite(step)):
                break
            theta = theta + step
            if np.max(np.abs(step)) < tol:
                converged = True
                break
    return FittedModel(LOGISTIC, float(theta[0]), theta[1:].copy(), 0.0, converged, it)


def objective(x, y, family, penalty: PenaltySpec, model: FittedModel) -> float:
    """Penalized objective on the internally standardized scale.

    Mean loss (half mean squared error, or mean negative log-likelihood) plus
    the penalty evaluated at ``model.lambda_used``.
    """
    x, y = _check_xy(x, y, family)
    n, p = x.shape
    std = _Standardized(x)
    beta = np.where(std.constant, 0.0, model.coef * std.sd)
    factors = penalty.resolved_factors(p)
    free = np.isfinite(factors) & ~std.constant
    l1, l2 = _penalty_weights(model.lambda_used, penalty, factors, free)
    kind, param = _kind_code(penalty)
    pen = _cd._penalty_value(beta, l1, l2, free, kind, param)
    if family == LINEAR:
        loss = 0.5 * np.mean((y - model.predict(x)) ** 2)
    else:
        loss = _deviance(family, y, model.predict(x)) / (2 * n)
    return float(loss + pen)


def warn_unconverged(models, what="fit"):
    bad = sum(1 for m in models if not m.converged)
    if bad:
        warnings.warn(f"{what}: {bad} of {len(models)} lambda values did not converge", RuntimeWarning)
