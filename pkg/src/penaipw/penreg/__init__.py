"""Penalized linear and logistic regression by pathwise coordinate descent."""

from .cv import (CVCurve, cross_validate, fit_adaptive_elastic_net, fit_adaptive_lasso,
                 fit_elastic_net, fit_lasso, fit_lsp, inverse_weights, make_folds)
from .path import (LINEAR, LOGISTIC, FitConfig, FittedModel, PenaltySpec, fit_path,
                   fit_unpenalized, lambda_max, objective)
from .thresholds import mcp_univariate, scad_univariate, soft_threshold

__all__ = [
    "CVCurve", "FitConfig", "FittedModel", "LINEAR", "LOGISTIC", "PenaltySpec",
    "cross_validate", "fit_adaptive_elastic_net", "fit_adaptive_lasso", "fit_elastic_net",
    "fit_lasso", "fit_lsp", "fit_path", "fit_unpenalized", "inverse_weights", "lambda_max",
    "make_folds", "mcp_univariate", "objective", "scad_univariate", "soft_threshold",
]
