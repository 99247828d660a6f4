"""Optimal noise allocation for the Gaussian mixture, by water-filling.

Minimizing the MAP adversary's detection probability over affine-Gaussian
mechanisms under the distortion budget sum(sigma_p_i^2) <= D reduces to

    minimize  sum_i mu_i^2 / (sigma_i^2 + sigma_p_i^2)
    s.t.      sum_i sigma_p_i^2 = D,   sigma_p_i^2 >= 0,

because the detection probability is monotone in the separation and the
shift beta only wastes budget.  The KKT conditions give the water-filling
solution

    sigma_p_i^2 = (|mu_i| / sqrt(lambda0) - sigma_i^2)^+

with the water level lambda0 chosen so the budget is met exactly:
coordinates whose base variance already exceeds |mu_i|/sqrt(lambda0)
receive no noise at all.  The budget equation is monotone in the level,
so a bisection pins it to machine precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .gmm import AffineMechanism, GaussianMixtureSpec, map_accuracy_closed_form

__all__ = ["OptimalMechanism", "solve_water_filling", "theory_frontier", "FrontierPoint"]


@dataclass(frozen=True)
class OptimalMechanism:
    """Water-filling solution: zero shift, per-coordinate noise variances."""

    mech: AffineMechanism
    lambda0: float
    distortion_used: float
    degenerate: bool = False  # set when all mu_i = 0 and any allocation is optimal


def _allocation(mu_abs: np.ndarray, sigma_sq: np.ndarray, level: float) -> np.ndarray:
    # level is c = 1/sqrt(lambda0); allocation is (c |mu_i| - sigma_i^2)^+
    return np.maximum(level * mu_abs - sigma_sq, 0.0)


def solve_water_filling(spec: GaussianMixtureSpec, distortion: float) -> OptimalMechanism:
    """Optimal per-coordinate noise variances for a total budget ``distortion``.

    Runs a bisection on the water level until the allocated total matches
    the budget within 1e-10 * max(D, 1).  D = 0 returns the zero-noise
    mechanism; a spec with all-zero means is flagged degenerate (detection
    accuracy already equals the prior guess, so any allocation is optimal).
    """
    if distortion < 0.0:
        raise ValueError("distortion budget must be non-negative")
    m = spec.dim
    mu_abs = np.abs(spec.mu)
    zero = AffineMechanism.zero(m)

    if not np.any(mu_abs > 0.0):
        return OptimalMechanism(zero, math.inf, 0.0, degenerate=True)

    if distortion == 0.0:
        # Largest level with an empty active set; lambda0 from its inverse.
        positive = mu_abs > 0.0
        level = float(np.min(spec.sigma_sq[positive] / mu_abs[positive]))
        return OptimalMechanism(zero, 1.0 / level**2, 0.0)

    tol = 1e-10 * max(distortion, 1.0)
    lo = 0.0
    hi = (distortion + float(spec.sigma_sq.sum())) / float(mu_abs.sum()) + 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        total = float(_allocation(mu_abs, spec.sigma_sq, mid).sum())
        if total > distortion:
            hi = mid
        else:
            lo = mid
        if hi - lo < 1e-16 * hi and abs(total - distortion) <= tol:
            break
    level = 0.5 * (lo + hi)
    noise = _allocation(mu_abs, spec.sigma_sq, level)
    used = float(noise.sum())
    if abs(used - distortion) > tol:
        raise ArithmeticError(
            f"water-filling bisection did not converge: allocated {used}, budget {distortion}"
        )
    mech = AffineMechanism(np.zeros(m), noise)
    return OptimalMechanism(mech, 1.0 / level**2, used)


@dataclass(frozen=True)
class FrontierPoint:
    distortion: float
    accuracy: float
    lambda0: float
    mechanism: AffineMechanism


def theory_frontier(spec: GaussianMixtureSpec, distortions) -> list[FrontierPoint]:
    """MAP-adversary accuracy of the optimal mechanism across a budget sweep.

    ``distortions`` must be non-empty, non-negative, and ascending; the
    resulting accuracy column is non-increasing and bounded below by
    max(q, 1-q).
    """
    ds = [float(d) for d in distortions]
    if not ds:
        raise ValueError("distortion list must be non-empty")
    if any(d < 0 for d in ds):
        raise ValueError("distortion values must be non-negative")
    if any(b < a for a, b in zip(ds, ds[1:])):
        raise ValueError("distortion list must be ascending")
    points = []
    for d in ds:
        sol = solve_water_filling(spec, d)
        acc = map_accuracy_closed_form(spec, sol.mech)
        points.append(FrontierPoint(d, acc, sol.lambda0, sol.mech))
    return points
