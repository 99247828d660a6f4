"""Two-component Gaussian mixture source and its MAP adversary.

The data model: a binary sensitive attribute S with P(S=1) = q, and an
m-dimensional feature vector X that is N(+mu, Sigma) given S=1 and
N(-mu, Sigma) given S=0, with diagonal Sigma.  An affine-Gaussian
release mechanism X_r = X + Z + beta (Z zero-mean Gaussian, diagonal
covariance Sigma_p) keeps X_r | S Gaussian, so the best possible
adversary -- maximum a posteriori detection with full knowledge of the
distribution and the mechanism -- has a closed-form accuracy

    P_d = q Q(-a/2 + ln((1-q)/q)/a) + (1-q) Q(-a/2 - ln((1-q)/q)/a),

where a^2 = (2 mu)^T (Sigma + Sigma_p)^{-1} (2 mu) and Q is the standard
normal tail.  The shift beta burns distortion budget but cancels in the
likelihood ratio, so it never helps the adversary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .numerics import RngState, q_function, sample_standard_normal

__all__ = [
    "GaussianMixtureSpec",
    "AffineMechanism",
    "sample_labeled",
    "sample_labeled_with_task",
    "posterior_s1",
    "map_accuracy_closed_form",
    "map_accuracy_monte_carlo",
]

# Below this separation the detector is numerically indistinguishable from
# guessing the prior, and the 1/alpha term in the threshold is singular.
_ALPHA_FLOOR = 1e-12


@dataclass(frozen=True)
class GaussianMixtureSpec:
    """Two-component mixture: P(S=1)=q, X|S=s ~ N((2s-1) mu, diag(sigma_sq))."""

    q: float
    mu: np.ndarray
    sigma_sq: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mu", np.asarray(self.mu, dtype=np.float64))
        object.__setattr__(self, "sigma_sq", np.asarray(self.sigma_sq, dtype=np.float64))
        if not (0.0 < self.q < 1.0):
            raise ValueError(f"class prior q must lie in (0, 1), got {self.q}")
        if self.mu.ndim != 1 or self.sigma_sq.shape != self.mu.shape or self.mu.size < 1:
            raise ValueError("mu and sigma_sq must be 1-d arrays of equal length >= 1")
        if np.any(self.sigma_sq <= 0.0):
            raise ValueError("all sigma_sq entries must be positive")

    @property
    def dim(self) -> int:
        return self.mu.size


@dataclass(frozen=True)
class AffineMechanism:
    """Release map X_r = X + Z + beta with Z ~ N(0, diag(sigma_p_sq))."""

    beta: np.ndarray
    sigma_p_sq: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "beta", np.asarray(self.beta, dtype=np.float64))
        object.__setattr__(self, "sigma_p_sq", np.asarray(self.sigma_p_sq, dtype=np.float64))
        if self.beta.ndim != 1 or self.sigma_p_sq.shape != self.beta.shape:
            raise ValueError("beta and sigma_p_sq must be 1-d arrays of equal length")
        if np.any(self.sigma_p_sq < 0.0):
            raise ValueError("noise variances must be non-negative")

    @property
    def dim(self) -> int:
        return self.beta.size

    @property
    def distortion(self) -> float:
        """Expected squared l2 distortion E||X_r - X||^2 = ||beta||^2 + tr(Sigma_p)."""
        return float(np.dot(self.beta, self.beta) + self.sigma_p_sq.sum())

    def apply(self, x: np.ndarray, rng: RngState) -> np.ndarray:
        """Draw X_r for each row of x."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        z = sample_standard_normal(rng, x.size).reshape(x.shape)
        return x + self.beta + np.sqrt(self.sigma_p_sq) * z

    @staticmethod
    def zero(dim: int) -> "AffineMechanism":
        return AffineMechanism(np.zeros(dim), np.zeros(dim))


def sample_labeled(spec: GaussianMixtureSpec, n: int, rng: RngState):
    """Draw n labeled rows (x, s) from the mixture.

    Returns:
        (x, s): features of shape (n, m) and integer labels of shape (n,).
    """
    if n < 1:
        raise ValueError("need at least one sample")
    n = int(n)
    s = (rng.uniform(n) < spec.q).astype(np.int64)
    z = sample_standard_normal(rng, n * spec.dim).reshape(n, spec.dim)
    x = (2.0 * s[:, None] - 1.0) * spec.mu + z * np.sqrt(spec.sigma_sq)
    return x, s


def sample_labeled_with_task(
    spec: GaussianMixtureSpec,
    n: int,
    rng: RngState,
    task_weights: np.ndarray,
    task_bias: float = 0.0,
    label_noise: float = 0.0,
):
    """Draw (x, s) plus a binary task label y = 1{w.x + b + noise > 0}.

    The task label is a deterministic-up-to-noise function of X alone, so
    any dependence between Y and S flows through the features; this is the
    synthetic stand-in for a downstream prediction target.
    """
    x, s = sample_labeled(spec, n, rng)
    w = np.asarray(task_weights, dtype=np.float64)
    if w.shape != (spec.dim,):
        raise ValueError("task_weights must have one entry per feature dimension")
    score = x @ w + task_bias
    if label_noise > 0.0:
        score = score + label_noise * sample_standard_normal(rng, n)
    y = (score > 0.0).astype(np.int64)
    return x, s, y


def _log_likelihood_ratio(spec, mech, x_r) -> np.ndarray:
    """log p(x_r | S=1) - log p(x_r | S=0) under the affine mechanism."""
    var = spec.sigma_sq + mech.sigma_p_sq
    centered = np.atleast_2d(x_r) - mech.beta
    # Quadratic terms of the two Gaussians; shared normalizers cancel.
    return 2.0 * centered @ (spec.mu / var)


def posterior_s1(spec: GaussianMixtureSpec, mech: AffineMechanism, x_r):
    """Exact posterior P(S=1 | X_r = x_r) under the affine mechanism.

    Accepts a single vector (returns a float) or an (n, m) batch
    (returns shape (n,)).
    """
    x_arr = np.asarray(x_r, dtype=np.float64)
    if x_arr.shape[-1] != spec.dim or mech.dim != spec.dim:
        raise ValueError(
            f"dimension mismatch: spec has m={spec.dim}, mechanism m={mech.dim}, "
            f"x_r has {x_arr.shape[-1]}"
        )
    llr = _log_likelihood_ratio(spec, mech, x_arr)
    logit = llr + math.log(spec.q) - math.log1p(-spec.q)
    post = np.where(
        logit >= 0,
        1.0 / (1.0 + np.exp(-logit)),
        np.exp(logit) / (1.0 + np.exp(logit)),
    )
    return float(post[0]) if x_arr.ndim == 1 else post


def detection_alpha(spec: GaussianMixtureSpec, mech: AffineMechanism) -> float:
    """Separation parameter a = sqrt((2 mu)^T (Sigma + Sigma_p)^{-1} (2 mu))."""
    var = spec.sigma_sq + mech.sigma_p_sq
    return 2.0 * math.sqrt(float((spec.mu**2 / var).sum()))


def map_accuracy_closed_form(spec: GaussianMixtureSpec, mech: AffineMechanism) -> float:
    """MAP adversary accuracy against the affine mechanism, in closed form.

    At zero separation (all mu_i = 0, or noise so large the ratio
    underflows) the detector degenerates to guessing the prior, which the
    formula's 1/alpha threshold term cannot express; that case returns
    max(q, 1-q) directly.
    """
    alpha = detection_alpha(spec, mech)
    q = spec.q
    if alpha < _ALPHA_FLOOR:
        return max(q, 1.0 - q)
    t = math.log((1.0 - q) / q) / alpha
    return float(
        q * q_function(-alpha / 2.0 + t) + (1.0 - q) * q_function(-alpha / 2.0 - t)
    )


def map_accuracy_monte_carlo(
    spec: GaussianMixtureSpec,
    mech: AffineMechanism,
    x_r: np.ndarray,
    labels: np.ndarray,
    rng: RngState,
) -> float:
    """Empirical accuracy of the MAP rule on released samples.

    Predicts argmax_s P(s | x_r); exact posterior ties are broken by an
    unbiased coin from ``rng``.
    """
    x_r = np.atleast_2d(np.asarray(x_r, dtype=np.float64))
    labels = np.asarray(labels)
    if x_r.shape[0] == 0:
        raise ValueError("empty sample set")
    if labels.shape[0] != x_r.shape[0]:
        raise ValueError("labels must match the number of samples")
    post = posterior_s1(spec, mech, x_r)
    pred = np.where(post > 0.5, 1, 0)
    ties = post == 0.5
    if np.any(ties):
        pred[ties] = (rng.uniform(int(ties.sum())) < 0.5).astype(int)
    return float(np.mean(pred == labels))
