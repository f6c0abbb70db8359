"""Univariate thresholding operators for L1, SCAD and MCP penalties.

Each function returns the minimiser of ``0.5 * (b - v)**2 + pen(b)`` for a
unit-variance coordinate. The scalar versions are compiled with numba so the
coordinate-descent kernels can call them directly.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def _soft(v, t):
    if v > t:
        return v - t
    if v < -t:
        return v + t
    return 0.0


@njit(cache=True)
def _scad(v, lam, a):
    av = abs(v)
    if av <= 2.0 * lam:
        return _soft(v, lam)
    if av <= a * lam:
        return _soft(v, a * lam / (a - 1.0)) / (1.0 - 1.0 / (a - 1.0))
    return v


@njit(cache=True)
def _mcp(v, lam, gamma):
    if abs(v) <= gamma * lam:
        return _soft(v, lam) / (1.0 - 1.0 / gamma)
    return v


@njit(cache=True)
def scad_penalty(b, lam, a):
    ab = abs(b)
    if ab <= lam:
        return lam * ab
    if ab <= a * lam:
        return (2.0 * a * lam * ab - ab * ab - lam * lam) / (2.0 * (a - 1.0))
    return lam * lam * (a + 1.0) / 2.0


@njit(cache=True)
def mcp_penalty(b, lam, gamma):
    ab = abs(b)
    if ab <= gamma * lam:
        return lam * ab - ab * ab / (2.0 * gamma)
    return 0.5 * gamma * lam * lam


def soft_threshold(v: float, t: float) -> float:
    """Soft-thresholding ``sign(v) * max(|v| - t, 0)``."""
    if t < 0:
        raise ValueError("threshold must be non-negative")
    return float(_soft(float(v), float(t)))


def scad_univariate(v: float, lam: float, a: float = 3.7) -> float:
    """SCAD thresholding rule of Fan and Li with concavity ``a > 2``."""
    if a <= 2:
        raise ValueError(f"SCAD requires a > 2, got {a}")
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    return float(_scad(float(v), float(lam), float(a)))


def mcp_univariate(v: float, lam: float, gamma: float = 3.0) -> float:
    """Firm thresholding, the MCP solution for ``gamma > 1``."""
    if gamma <= 1:
        raise ValueError(f"MCP requires gamma > 1, got {gamma}")
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    return float(_mcp(float(v), float(lam), float(gamma)))


soft_threshold_vec = np.vectorize(soft_threshold, otypes=[float])
