"""Context-free noise mechanisms and their local differential-privacy risk.

The context-aware game in this package shapes noise using the data
distribution; the classical alternative adds i.i.d. per-feature noise with
no knowledge of the data at all.  For features normalized into [0, 1], a
per-record query has l1 sensitivity d and l2 sensitivity sqrt(d), giving
local DP risk

    Laplace:   eps = d sqrt(2 d / D)
    Gaussian:  eps = (2 d / sqrt(D)) sqrt(ln(1.25 / delta))

when each mechanism is calibrated so its expected squared l2 distortion
per sample equals D (per-feature noise variance D/d).  All three
mechanisms here share that calibration so the distortion axis is directly
comparable with the learned mechanisms.

Note: the Laplace/Gaussian risk derivation conflates a standard deviation
with a variance at one step if read literally; the final eps formulas
above are the authoritative forms implemented here.
"""

from __future__ import annotations

import math

import numpy as np

from .numerics import RngState, sample_standard_normal

__all__ = [
    "add_laplace",
    "add_gaussian",
    "add_uniform",
    "laplace_epsilon",
    "gaussian_epsilon",
]


def _check_features(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("features must be an (n, d) array")
    return x


def add_laplace(x, distortion: float, rng: RngState) -> np.ndarray:
    """Add i.i.d. Laplace noise with per-feature variance D/d.

    The Laplace scale b satisfies 2 b^2 = D/d.  D = 0 returns the input
    unchanged.
    """
    x = _check_features(x)
    if distortion < 0:
        raise ValueError("distortion must be non-negative")
    if distortion == 0:
        return x.copy()
    b = math.sqrt(distortion / (2.0 * x.shape[1]))
    u = rng.uniform(x.size).reshape(x.shape) - 0.5
    # inverse-CDF sampling keeps the draw a pure function of the uniform stream
    noise = -b * np.sign(u) * np.log1p(-2.0 * np.abs(u))
    return x + noise


def add_gaussian(x, distortion: float, rng: RngState) -> np.ndarray:
    """Add i.i.d. Gaussian noise with per-feature variance exactly D/d."""
    x = _check_features(x)
    if distortion < 0:
        raise ValueError("distortion must be non-negative")
    if distortion == 0:
        return x.copy()
    sigma = math.sqrt(distortion / x.shape[1])
    return x + sigma * sample_standard_normal(rng, x.size).reshape(x.shape)


def add_uniform(x, distortion: float, rng: RngState) -> np.ndarray:
    """Add i.i.d. symmetric uniform noise with per-feature variance D/d.

    Half-width a = sqrt(3 D / d), since a uniform on [-a, a] has variance
    a^2 / 3.
    """
    x = _check_features(x)
    if distortion < 0:
        raise ValueError("distortion must be non-negative")
    if distortion == 0:
        return x.copy()
    half_width = math.sqrt(3.0 * distortion / x.shape[1])
    u = rng.uniform(x.size).reshape(x.shape)
    return x + half_width * (2.0 * u - 1.0)


def _check_dim(d: int) -> int:
    if int(d) != d or d < 1:
        raise ValueError("feature dimension must be a positive integer")
    return int(d)


def laplace_epsilon(d: int, distortion: float) -> float:
    """Local DP risk of the Laplace mechanism at total distortion D.

    D = 0 means no noise, i.e. unbounded risk: returns inf.
    """
    d = _check_dim(d)
    if distortion < 0:
        raise ValueError("distortion must be non-negative")
    if distortion == 0:
        return math.inf
    return d * math.sqrt(2.0 * d / distortion)


def gaussian_epsilon(d: int, distortion: float, delta: float) -> float:
    """Local (eps, delta) DP risk of the Gaussian mechanism at distortion D."""
    d = _check_dim(d)
    if distortion < 0:
        raise ValueError("distortion must be non-negative")
    if not (0.0 < delta < 1.0):
        raise ValueError("delta must lie strictly between 0 and 1")
    if distortion == 0:
        return math.inf
    return 2.0 * d / math.sqrt(distortion) * math.sqrt(math.log(1.25 / delta))
