"""Independent reference computations used by the tests."""

import math

import numpy as np


def golden_min(f, lo=-10.0, hi=10.0, tol=1e-11, grid=4001):
    """Global 1-D minimizer: dense grid scan, then golden-section refinement.

    The scan brackets the global minimum of functions with several local
    minima (the penalized quadratics here are piecewise smooth). ``f`` must
    accept arrays as well as scalars.
    """
    xs = np.linspace(lo, hi, grid)
    vals = f(xs)
    k = int(np.argmin(vals))
    a = xs[max(k - 1, 0)]
    b = xs[min(k + 1, grid - 1)]
    inv_phi = (math.sqrt(5) - 1) / 2
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = f(d)
    best = (a + b) / 2
    # the minimum may sit exactly on a kink at zero
    return 0.0 if f(0.0) <= f(best) else best


def scad_pen(b, lam, a):
    ab = np.abs(b)
    mid = (2 * a * lam * ab - ab ** 2 - lam ** 2) / (2 * (a - 1))
    return np.where(ab <= lam, lam * ab, np.where(ab <= a * lam, mid, lam ** 2 * (a + 1) / 2))


def mcp_pen(b, lam, g):
    ab = np.abs(b)
    return np.where(ab <= g * lam, lam * ab - ab ** 2 / (2 * g), g * lam ** 2 / 2)


def ols(x, y):
    """Least squares with intercept via the normal equations."""
    design = np.column_stack([np.ones(len(y)), x])
    theta = np.linalg.solve(design.T @ design, design.T @ y)
    return theta[0], theta[1:]


def logistic_mle(x, y, iters=100):
    """Logistic maximum likelihood by plain Newton steps (separate code path)."""
    design = np.column_stack([np.ones(len(y)), x])
    theta = np.zeros(design.shape[1])
    for _ in range(iters):
        p = 1 / (1 + np.exp(-design @ theta))
        step = np.linalg.solve(design.T @ (design * (p * (1 - p))[:, None]), design.T @ (y - p))
        theta += step
        if np.abs(step).max() < 1e-12:
            break
    return theta[0], theta[1:]
