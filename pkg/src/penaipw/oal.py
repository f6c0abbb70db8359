"""Outcome-adaptive lasso for propensity-score models.

Penalty weights for the logistic lasso of treatment on covariates come from
an outcome regression, so covariates unrelated to the outcome (instruments,
noise) are penalized heavily while confounders and outcome predictors are
kept. The tuning parameter is chosen by covariate balance (weighted absolute
mean difference) or, optionally, by cross-validated deviance.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .data import Dataset
from .penreg import (LINEAR, LOGISTIC, FitConfig, FittedModel, PenaltySpec, cross_validate,
                     fit_path, fit_unpenalized)

DEFAULT_EXPONENTS = (-10.0, -5.0, -2.0, -1.0, -0.75, -0.5, -0.25, 0.25, 0.49)
CRITERIA = ("wamd", "cv_deviance")


@dataclass(frozen=True)
class OalConfig:
    """Tuning controls for :func:`fit_oal`.

    Candidate penalties are ``n**kappa`` for ``kappa`` in ``lambda_exponents``,
    on the scale of the summed log-likelihood. The solver works with the mean
    log-likelihood, so it receives ``n**kappa / n``.
    """

    gamma: float = 2.0
    lambda_exponents: tuple = DEFAULT_EXPONENTS
    criterion: str = "wamd"
    zero_guard: float = 1e-12
    gamma_convergence_factor: Optional[float] = None

    def __post_init__(self):
        if not self.gamma > 1:
            raise ValueError(f"gamma must exceed 1, got {self.gamma}")
        if len(self.lambda_exponents) == 0:
            raise ValueError("lambda_exponents must not be empty")
        if self.criterion not in CRITERIA:
            raise ValueError(f"criterion must be one of {CRITERIA}, got {self.criterion!r}")
        object.__setattr__(self, "lambda_exponents",
                           tuple(float(k) for k in self.lambda_exponents))


@dataclass
class OalFit:
    """Result of :func:`fit_oal`.

    ``outcome_coef`` are the covariate slopes of the outcome regression per
    standard deviation of each covariate; ``weights`` are the penalty
    factors derived from them. ``lambdas`` and ``criterion_values`` list the
    candidates in descending order of lambda (solver scale).
    """

    outcome_coef: np.ndarray
    weights: np.ndarray
    chosen_lambda: float
    criterion_values: np.ndarray
    ps_model: FittedModel
    lambdas: np.ndarray = field(default_factory=lambda: np.empty(0))
    flags: tuple = ()

    def predict(self, x) -> np.ndarray:
        return self.ps_model.predict(x)


def wamd(d: Dataset, ps, outcome_coef) -> float:
    """Weighted absolute mean difference of the covariates.

    ``sum_j |b_j| * |mean_w1(x_j) - mean_w0(x_j)|`` where treated units carry
    weight ``1/ps`` and controls ``1/(1-ps)``, each normalized to sum to one
    within its arm.
    """
    ps = np.asarray(ps, dtype=float)
    if ps.shape != d.z.shape:
        raise ValueError("ps must have one entry per row")
    if not np.all((ps > 0) & (ps < 1)):
        raise ValueError("propensity scores must lie strictly inside (0, 1)")
    b = np.asarray(outcome_coef, dtype=float)
    if b.shape != (d.p,):
        raise ValueError(f"outcome_coef must have {d.p} entries")
    d.check_arms(1)
    w1 = d.z / ps
    w0 = (1 - d.z) / (1 - ps)
    diff = w1 @ d.x / w1.sum() - w0 @ d.x / w0.sum()
    return float(np.abs(b) @ np.abs(diff))


def _outcome_slopes(d: Dataset, fit_cfg: FitConfig):
    """Slopes of y on (z, x) per covariate sd; lasso CV when n <= p + 1."""
    sd = d.x.std(axis=0)
    # constant columns get slope zero, which excludes them from the PS model
    live = np.flatnonzero(sd > 0)
    design = np.column_stack([d.z, d.x[:, live]])
    n, q = design.shape
    flags = ()
    if n > q + 1:
        fit = fit_unpenalized(design, d.y, LINEAR)
        if "rank_deficient" in fit.flags:
            raise ValueError("outcome regression for the OAL weights is singular")
    else:
        factors = np.r_[0.0, np.ones(len(live))]
        fit = cross_validate(design, d.y, LINEAR, PenaltySpec("l1", factors), fit_cfg)[0]
        flags = ("weights_from_lasso",)
    slopes = np.zeros(d.p)
    slopes[live] = fit.coef[1:] * sd[live]
    return slopes, flags


def fit_oal(d: Dataset, cfg: OalConfig = OalConfig(),
            fit_cfg: FitConfig = FitConfig()) -> OalFit:
    """Fit the outcome-adaptive lasso propensity model.

    1. Pooled least squares of y on treatment and covariates.
    2. Penalty factors ``|b_j|**-gamma`` from the covariate slopes (per
       covariate sd); slopes below ``zero_guard`` exclude the covariate.
    3. Weighted logistic lasso of z on the covariates at every candidate
       lambda, warm-started from the largest.
    4. The candidate minimizing wAMD is kept (ties go to the larger lambda),
       or ``criterion="cv_deviance"`` hands the factors to
       :func:`cross_validate`.

    When ``n <= p + 1`` the slopes come from a lasso CV fit with the
    treatment unpenalized and the result carries the flag
    ``"weights_from_lasso"``.
    """
    d.check_arms(1)
    coef, flags = _outcome_slopes(d, fit_cfg)
    n = d.n

    if cfg.criterion == "cv_deviance":
        weights = oal_weights(coef, cfg.gamma, cfg.zero_guard)
        model, curve = cross_validate(d.x, d.z, LOGISTIC, PenaltySpec("l1", weights), fit_cfg)
        return OalFit(coef, weights, model.lambda_used, curve.cvm, model, curve.lambdas, flags)

    kappas = np.sort(np.array(cfg.lambda_exponents))[::-1]
    lambdas = np.power(float(n), kappas) / n
    if cfg.gamma_convergence_factor is None:
        weights = oal_weights(coef, cfg.gamma, cfg.zero_guard)
        models = fit_path(d.x, d.z, LOGISTIC, PenaltySpec("l1", weights), fit_cfg,
                          lambdas=lambdas)
        all_weights = [weights] * len(models)
    else:
        all_weights = [oal_weights(coef, g, cfg.zero_guard)
                       for g in kappa_gammas(kappas, cfg.gamma_convergence_factor)]
        models = [fit_path(d.x, d.z, LOGISTIC, PenaltySpec("l1", w), fit_cfg, lambdas=[lam])[0]
                  for w, lam in zip(all_weights, lambdas)]
    sd = d.x.std(axis=0)
    dstd = d.with_x((d.x - d.x.mean(axis=0)) / np.where(sd > 0, sd, 1.0))
    values = np.full(len(models), np.inf)
    with np.errstate(over="ignore"):
        for k, m in enumerate(models):
            ps = m.predict(d.x)
            if np.all((ps > 0) & (ps < 1)):
                values[k] = wamd(dstd, ps, coef)
    if not np.isfinite(values).any():
        raise ValueError("every OAL candidate produced propensity scores of 0 or 1")
    best = int(np.argmin(values))
    return OalFit(coef, all_weights[best], float(lambdas[best]), values, models[best], lambdas,
                  flags)


def oal_weights(coef, gamma: float, zero_guard: float = 1e-12) -> np.ndarray:
    """Penalty factors ``|b_j|**-gamma``; infinite below ``zero_guard``."""
    ab = np.abs(np.asarray(coef, dtype=float))
    weights = np.full(ab.shape, np.inf)
    ok = ab >= zero_guard
    weights[ok] = ab[ok] ** (-gamma)
    return weights


def kappa_gammas(kappas, convergence_factor: float) -> np.ndarray:
    """Exponents ``2 * (convergence_factor - kappa + 1)`` tied to each candidate.

    Pairing a smaller penalty ``n**kappa`` with a larger weight exponent keeps
    the rate conditions of the oracle property satisfied for every
    candidate.
    """
    return 2.0 * (convergence_factor - np.asarray(kappas, dtype=float) + 1.0)
