"""Nonparametric bootstrap standard errors and normal-approximation intervals."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .estimators import EstimatorConfig, EstimatorSpec, run_estimators

Z_975 = 1.959964
MAX_REDRAWS = 10
# every arm of a resample needs this many rows for the per-arm outcome fits
MIN_ARM = 2


@dataclass
class BootstrapResult:
    """Original-data estimate with its bootstrap standard error and 95% CI."""

    theta_hat: float
    se: float
    ci_low: float
    ci_high: float
    b_requested: int
    b_valid: int
    estimator: str = ""


def normal_ci(theta_hat: float, se: float, z: float = Z_975):
    return theta_hat - z * se, theta_hat + z * se


def resample_indices(n: int, z, seed: int, i: int):
    """Row indices of bootstrap resample ``i``, or None after failed redraws.

    The stream for resample ``i`` depends only on ``(seed, i)``. A draw in
    which an arm has fewer than two rows is redrawn up to ten times.
    """
    rng = np.random.default_rng([int(seed), int(i)])
    z = np.asarray(z)
    for _ in range(MAX_REDRAWS + 1):
        idx = rng.integers(0, n, n)
        n1 = int(z[idx].sum())
        if n1 >= MIN_ARM and n - n1 >= MIN_ARM:
            return idx
    return None


def _one_resample(args):
    d, specs, cfg, seed, i = args
    idx = resample_indices(d.n, d.z, seed, i)
    if idx is None:
        return {s.id: math.nan for s in specs}
    res = run_estimators(specs, d.subset_rows(idx), cfg, errors="record")
    out = {}
    for s in specs:
        est = res[s.id]
        out[s.id] = math.nan if isinstance(est, Exception) or est.extreme else est.theta_hat
    return out


def bootstrap_many(d: Dataset, specs, b: int = 1000, seed: int = 0,
                   cfg: EstimatorConfig = EstimatorConfig(), jobs: int = 1,
                   progress=None) -> dict:
    """Bootstrap several estimators on shared resamples.

    Every resample reruns the complete pipeline (variable selection
    included). The standard error is the sample standard deviation
    (denominator ``b_valid - 1``) of the valid resample estimates; failed
    and extreme resample estimates are dropped. Intervals are centered on
    the original-data estimate.

    Returns
    -------
    dict mapping estimator id to BootstrapResult
    """
    if b < 2:
        raise ValueError("b must be >= 2")
    specs = list(specs)
    original = run_estimators(specs, d, cfg, errors="raise")
    tasks = [(d, specs, cfg, seed, i) for i in range(b)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            draws = list(pool.map(_one_resample, tasks, chunksize=max(1, b // (4 * jobs))))
    else:
        draws = []
        for t in tasks:
            draws.append(_one_resample(t))
            if progress is not None:
                progress(len(draws), b)
    out = {}
    for s in specs:
        vals = np.array([r[s.id] for r in draws], dtype=float)
        vals = vals[np.isfinite(vals)]
        theta = original[s.id].theta_hat
        se = float(np.std(vals, ddof=1)) if len(vals) >= 2 else math.nan
        lo, hi = normal_ci(theta, se)
        out[s.id] = BootstrapResult(theta, se, lo, hi, b, len(vals), s.id)
    return out


def bootstrap_ci(d: Dataset, spec: EstimatorSpec, b: int = 1000, seed: int = 0,
                 cfg: EstimatorConfig = EstimatorConfig(), jobs: int = 1) -> BootstrapResult:
    """Bootstrap standard error and normal 95% interval for one estimator."""
    return bootstrap_many(d, [spec], b, seed, cfg, jobs)[spec.id]
