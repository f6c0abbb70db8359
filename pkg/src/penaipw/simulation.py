"""Simulated confounded data, the scenario grid and Monte Carlo summaries."""

from __future__ import annotations

import math
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit

from .data import Dataset
from .estimators import (EXTREME, ESTIMATOR_IDS, EstimatorConfig, EstimatorSpec, is_extreme,
                         run_estimators)

TRUE_ATE = 0.5
CONFOUNDING = ("strong", "weak")
COVARIATE_TYPES = ("continuous", "binary")
MISSPEC = ("none", "ps", "outcome", "both")
GRID_SIZES = ((200, 80), (500, 200), (1000, 400))
GRID_RHOS = (0.2, 0.5)
# 0-based columns of the confounders and outcome predictors
KNOWN_SETS = (0, 1, 2, 3)


def coefficients(confounding: str, p: int):
    """Treatment (alpha) and outcome (beta) coefficient vectors.

    Columns 1-2 are confounders, 3-4 outcome predictors, 5-6 instruments and
    the rest noise (1-based).
    """
    if p < 6:
        raise ValueError("p must be at least 6")
    alpha = np.zeros(p)
    beta = np.zeros(p)
    if confounding == "strong":
        alpha[[0, 1, 4, 5]] = 1.0
        beta[:4] = 0.6
    elif confounding == "weak":
        alpha[[0, 1]] = 0.4
        alpha[[4, 5]] = 1.0
        beta[:2] = 0.2
        beta[2:4] = 0.6
    else:
        raise ValueError(f"confounding must be one of {CONFOUNDING}, got {confounding!r}")
    return alpha, beta


@dataclass(frozen=True)
class ScenarioConfig:
    """One cell of the experiment grid.

    ``estimators`` holds registry ids; AIPW-Targ automatically receives the
    known confounder and predictor columns.
    """

    n: int = 200
    p: int = 80
    rho: float = 0.0
    confounding: str = "strong"
    covariate_type: str = "continuous"
    misspec: str = "none"
    reps: int = 100
    seed: int = 0
    estimators: tuple = ESTIMATOR_IDS

    def __post_init__(self):
        if self.n < 2 or self.p < 7:
            raise ValueError("need n >= 2 and p >= 7")
        if not 0 <= self.rho < 1:
            raise ValueError(f"rho must lie in [0, 1), got {self.rho}")
        if self.rho != 0 and self.misspec != "none":
            raise ValueError("correlated covariates are only defined with misspec='none'")
        if self.confounding not in CONFOUNDING:
            raise ValueError(f"confounding must be one of {CONFOUNDING}")
        if self.covariate_type not in COVARIATE_TYPES:
            raise ValueError(f"covariate_type must be one of {COVARIATE_TYPES}")
        if self.misspec not in MISSPEC:
            raise ValueError(f"misspec must be one of {MISSPEC}")
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        ids = tuple(self.estimators)
        for i in ids:
            EstimatorSpec(i)
        object.__setattr__(self, "estimators", ids)

    @property
    def scenario_id(self) -> str:
        return (f"{self.confounding}-{self.covariate_type}-{self.misspec}"
                f"-n{self.n}-p{self.p}-rho{self.rho:g}")

    def specs(self, ps_clip=None):
        return [EstimatorSpec(i, ps_clip, KNOWN_SETS if i == "AIPW-Targ" else None)
                for i in self.estimators]

    def replace(self, **kw) -> "ScenarioConfig":
        return replace(self, **kw)


def gen_covariates(n: int, p: int, rho: float, rng) -> np.ndarray:
    """Equicorrelated standard normals, ``sqrt(rho)*g_i + sqrt(1-rho)*e_ij``."""
    if not 0 <= rho < 1:
        raise ValueError(f"rho must lie in [0, 1), got {rho}")
    g = rng.standard_normal((n, 1))
    e = rng.standard_normal((n, p))
    return math.sqrt(rho) * g + math.sqrt(1 - rho) * e


def binarize(x) -> np.ndarray:
    """1 where the entry is positive, -1 elsewhere (zero included)."""
    return np.where(np.asarray(x) > 0, 1.0, -1.0)


def transform_u(x) -> np.ndarray:
    """Nonlinear transform of the first six columns; the rest pass through."""
    x = np.asarray(x, dtype=float)
    if x.shape[1] < 7:
        raise ValueError("transform_u needs at least 7 columns")
    u = x.copy()
    x1, x2, x3, x4, x5, x6 = (x[:, j] for j in range(6))
    u[:, 0] = 3 * x1 / (1 + np.exp(x2))
    u[:, 1] = 5 * np.sin(x2)
    u[:, 2] = x3 ** 3 / 3
    u[:, 3] = 5 * np.sin(x4)
    u[:, 4] = (x5 + x6) / math.sqrt(2)
    u[:, 5] = 5 * np.sin(x6)
    return u


def gen_treatment(v, alpha, rng) -> np.ndarray:
    """Bernoulli draws with ``logit P(z=1) = v @ alpha`` (no intercept)."""
    prob = expit(np.asarray(v, dtype=float) @ np.asarray(alpha, dtype=float))
    return (rng.random(len(prob)) < prob).astype(float)


def gen_outcome(v, z, beta, rng, noise_sd: float = 1.0) -> np.ndarray:
    """``y = 0.5*z + v @ beta + eps`` with ``eps ~ N(0, noise_sd**2)``."""
    v = np.asarray(v, dtype=float)
    eps = rng.standard_normal(v.shape[0]) * noise_sd
    return TRUE_ATE * np.asarray(z, dtype=float) + v @ np.asarray(beta, dtype=float) + eps


def replication_rng(base_seed: int, scenario_id: str, rep: int):
    """Generator for one replication, a pure function of its three labels."""
    key = zlib.crc32(scenario_id.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence([int(base_seed), key, int(rep)]))


def make_replication(cfg: ScenarioConfig, rep_index: int, base_seed=None) -> Dataset:
    """Draw one dataset of the scenario.

    Covariates are binarized first (binary scenarios), the transform is
    applied to whichever generator is misspecified, and the returned
    dataset always holds the untransformed covariates.
    """
    seed = cfg.seed if base_seed is None else base_seed
    rng = replication_rng(seed, cfg.scenario_id, rep_index)
    x = gen_covariates(cfg.n, cfg.p, cfg.rho, rng)
    if cfg.covariate_type == "binary":
        x = binarize(x)
    alpha, beta = coefficients(cfg.confounding, cfg.p)
    u = transform_u(x) if cfg.misspec != "none" else None
    v_ps = u if cfg.misspec in ("ps", "both") else x
    v_out = u if cfg.misspec in ("outcome", "both") else x
    z = gen_treatment(v_ps, alpha, rng)
    y = gen_outcome(v_out, z, beta, rng)
    return Dataset(x, z, y)


@dataclass
class ReplicationResult:
    """Per-estimator outcome of one replication.

    ``theta`` is NaN for an estimator that failed; its message is kept in
    ``errors``.
    """

    rep: int
    theta: dict
    extreme: dict
    selected: dict = field(default_factory=dict)
    errors: dict = field(default_factory=dict)


@dataclass
class MetricsSummary:
    """Bias, standard error and RMSE of one estimator over replications.

    ``bias``/``se``/``rmse`` are NaN when ``hyphen`` is set, i.e. when the
    mean over all finite estimates (extreme ones included) is non-finite or
    beyond the extreme threshold.
    """

    estimator: str
    bias: float
    se: float
    rmse: float
    n_valid: int
    n_extreme: int
    n_failed: int = 0
    hyphen: bool = False


def summarize(estimator: str, thetas, truth: float = TRUE_ATE) -> MetricsSummary:
    """Monte Carlo metrics; NaN entries count as failed replications.

    Estimates flagged extreme are left out of the moments. ``se`` is the
    standard deviation with denominator ``n_valid`` and
    ``rmse = sqrt(bias**2 + se**2)``.
    """
    t = np.asarray(thetas, dtype=float)
    failed = np.isnan(t)
    ext = np.array([is_extreme(v) for v in t]) & ~failed
    valid = t[~failed & ~ext]
    n_valid, n_ext = len(valid), int(ext.sum())
    with np.errstate(over="ignore", invalid="ignore"):
        everything = t[~failed]
        overall = float(np.mean(everything)) if len(everything) else 0.0
    hyphen = n_ext > 0 and (not np.isfinite(overall) or abs(overall) > EXTREME)
    if hyphen or n_valid == 0:
        return MetricsSummary(estimator, math.nan, math.nan, math.nan, n_valid, n_ext,
                              int(failed.sum()), hyphen)
    bias = float(valid.mean() - truth)
    se = float(np.sqrt(np.mean((valid - valid.mean()) ** 2)))
    return MetricsSummary(estimator, bias, se, math.hypot(bias, se), n_valid, n_ext,
                          int(failed.sum()), False)


def run_replication(cfg: ScenarioConfig, rep: int, est_cfg: EstimatorConfig = EstimatorConfig(),
                    ps_clip=None) -> ReplicationResult:
    d = make_replication(cfg, rep)
    res = run_estimators(cfg.specs(ps_clip), d, est_cfg, errors="record")
    theta, extreme, selected, errors = {}, {}, {}, {}
    for eid, est in res.items():
        if isinstance(est, Exception):
            theta[eid] = math.nan
            extreme[eid] = False
            errors[eid] = f"{type(est).__name__}: {est}"
        else:
            theta[eid] = est.theta_hat
            extreme[eid] = est.extreme
            selected[eid] = {k: v for k, v in est.diagnostics.items() if isinstance(v, list)}
    return ReplicationResult(rep, theta, extreme, selected, errors)


def _rep_worker(args):
    cfg, rep, est_cfg, ps_clip = args
    return run_replication(cfg, rep, est_cfg, ps_clip)


def run_scenario(cfg: ScenarioConfig, est_cfg: EstimatorConfig = EstimatorConfig(),
                 jobs: int = 1, ps_clip=None, progress=None):
    """Run every replication of a scenario and summarize each estimator.

    Replications are independent; with ``jobs > 1`` they run in worker
    processes and the output is identical to a serial run.

    Returns
    -------
    results : list of ReplicationResult, ordered by replication
    summary : dict mapping estimator id to MetricsSummary
    """
    tasks = [(cfg, r, est_cfg, ps_clip) for r in range(cfg.reps)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_rep_worker, tasks, chunksize=max(1, cfg.reps // (4 * jobs))))
    else:
        results = []
        for task in tasks:
            results.append(_rep_worker(task))
            if progress is not None:
                progress(len(results), cfg.reps)
    summary = {eid: summarize(eid, [r.theta[eid] for r in results]) for eid in cfg.estimators}
    return results, summary


def paper_grid(reps: int = 1000, seed: int = 0, estimators=ESTIMATOR_IDS):
    """The 72 settings: 2 confounding x 2 covariate types x 3 sizes x 6 designs.

    The six designs are the four misspecification patterns at ``rho = 0``
    plus ``rho`` in {0.2, 0.5} with both models correct.
    """
    grid = []
    for conf in CONFOUNDING:
        for ctype in COVARIATE_TYPES:
            for n, p in GRID_SIZES:
                designs = [(0.0, m) for m in MISSPEC] + [(r, "none") for r in GRID_RHOS]
                for rho, mis in designs:
                    grid.append(ScenarioConfig(n, p, rho, conf, ctype, mis, reps, seed,
                                               tuple(estimators)))
    return grid


def timed_run(cfg: ScenarioConfig, est_cfg: EstimatorConfig = EstimatorConfig(), jobs: int = 1,
              ps_clip=None):
    """:func:`run_scenario` plus the elapsed wall time in seconds."""
    t0 = time.perf_counter()
    results, summary = run_scenario(cfg, est_cfg, jobs, ps_clip)
    return results, summary, time.perf_counter() - t0
