"""Tunable adversarial losses: the alpha-loss family and Arimoto entropy.

For alpha in [1, inf], the loss assigned to a soft decision that puts
probability p on the true label is

    alpha = 1:        -log p                 (log loss, belief refinement)
    1 < alpha < inf:  (a/(a-1)) (1 - p^((a-1)/a))
    alpha = inf:      1 - p                  (expected 0-1 loss)

The adversary's optimal soft decision under this loss is the tilted
posterior p(s|u)^a / sum_s' p(s'|u)^a, and its optimal expected loss has
the closed form

    (a/(a-1)) (1 - exp(((1-a)/a) H_a(S|U)))      (H(S|U) at a = 1),

where H_a(S|U) is the Arimoto conditional entropy.  Since
H_a(S|U) <= H_a(S) with equality exactly at independence, driving the
adversary's optimal loss up to its unconditional ceiling is equivalent to
statistical independence of the released variable from S -- this is the
operational bridge between adversarial training and demographic parity.

A squared-loss adversary ((h - S)^2, optimal strategy h* = E[S | U],
objective the negative MMSE) also fits this minimax template; it is
documented here for completeness but no operation in this package trains
against it.

Alphas are plain floats with ``math.inf`` as the hard-decision endpoint;
entropies are in nats.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "alpha_loss",
    "tilted_posterior",
    "arimoto_conditional_entropy",
    "arimoto_entropy",
    "min_expected_alpha_loss",
    "expected_alpha_loss",
]

# Floor applied inside logs and fractional powers; the theory assumes exact
# arithmetic on strictly positive probabilities.
PROB_FLOOR = 1e-12


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if math.isnan(alpha) or alpha < 1.0:
        raise ValueError(f"alpha must lie in [1, inf], got {alpha}")
    return alpha


def alpha_loss(p_true: float, alpha: float) -> float:
    """Loss of a soft decision that assigns probability p_true to the truth."""
    alpha = _check_alpha(alpha)
    p = min(max(float(p_true), PROB_FLOOR), 1.0)
    if p_true < 0.0 or p_true > 1.0:
        raise ValueError(f"p_true must be a probability, got {p_true}")
    if alpha == 1.0:
        return -math.log(p)
    if math.isinf(alpha):
        return 1.0 - p
    return alpha / (alpha - 1.0) * (1.0 - p ** ((alpha - 1.0) / alpha))


def tilted_posterior(p, alpha: float) -> np.ndarray:
    """Optimal soft decision under alpha-loss: p_s^alpha / sum_s' p_s'^alpha.

    alpha = 1 returns p unchanged; alpha = inf returns the uniform
    distribution over the argmax set.
    """
    alpha = _check_alpha(alpha)
    p = np.asarray(p, dtype=np.float64)
    if np.any(p < 0.0):
        raise ValueError("pmf entries must be non-negative")
    total = p.sum()
    if total <= 0.0:
        raise ValueError("pmf must have positive mass")
    p = p / total
    if alpha == 1.0:
        return p
    if math.isinf(alpha):
        best = p == p.max()
        return best / best.sum()
    # Scale by the max before exponentiating so p^alpha cannot underflow.
    scaled = np.zeros_like(p)
    pos = p > 0.0
    scaled[pos] = np.exp(alpha * np.log(p[pos] / p[pos].max()))
    return scaled / scaled.sum()


def _validated_joint(joint) -> np.ndarray:
    joint = np.asarray(joint, dtype=np.float64)
    if joint.ndim != 2:
        raise ValueError("joint pmf must be a 2-d array indexed (s, u)")
    if np.any(joint < 0.0):
        raise ValueError("joint pmf entries must be non-negative")
    if abs(joint.sum() - 1.0) > 1e-9:
        raise ValueError(f"joint pmf must sum to 1, got {joint.sum()!r}")
    return joint


def arimoto_conditional_entropy(joint, alpha: float) -> float:
    """Arimoto conditional entropy H_a(S|U) of a finite joint pmf, in nats.

    joint[s, u] = P(S=s, U=u).  At alpha = 1 this is the Shannon
    conditional entropy; at alpha = inf it is -log of the probability of
    correct MAP guessing.
    """
    alpha = _check_alpha(alpha)
    joint = _validated_joint(joint)
    p_u = joint.sum(axis=0)
    if alpha == 1.0:
        mass = joint > 0.0
        cond = joint[mass] / np.broadcast_to(p_u, joint.shape)[mass]
        return float(-(joint[mass] * np.log(np.maximum(cond, PROB_FLOOR))).sum())
    if math.isinf(alpha):
        return float(-math.log(max(joint.max(axis=0).sum(), PROB_FLOOR)))
    # Column-wise alpha-norms, computed with a per-column scale so that
    # large alpha cannot underflow.
    norms = np.zeros(joint.shape[1])
    for u in range(joint.shape[1]):
        col = joint[:, u]
        top = col.max()
        if top <= 0.0:
            continue
        norms[u] = top * (np.power(col / top, alpha).sum()) ** (1.0 / alpha)
    return float(alpha / (1.0 - alpha) * math.log(max(norms.sum(), PROB_FLOOR)))


def arimoto_entropy(p, alpha: float) -> float:
    """Unconditional Arimoto (= Renyi) entropy H_a(S) of a marginal pmf."""
    p = np.asarray(p, dtype=np.float64)
    return arimoto_conditional_entropy(p.reshape(-1, 1), alpha)


def min_expected_alpha_loss(joint, alpha: float) -> float:
    """The adversary's optimal expected alpha-loss, via the closed form."""
    alpha = _check_alpha(alpha)
    h = arimoto_conditional_entropy(joint, alpha)
    if alpha == 1.0:
        return h
    if math.isinf(alpha):
        return 1.0 - math.exp(-h)  # probability of MAP error
    return alpha / (alpha - 1.0) * (1.0 - math.exp((1.0 - alpha) / alpha * h))


def expected_alpha_loss(joint, decision, alpha: float) -> float:
    """Expected alpha-loss of an arbitrary soft decision rule.

    decision[s, u] is the probability the rule assigns to label s after
    observing u; each column must be a pmf.
    """
    alpha = _check_alpha(alpha)
    joint = _validated_joint(joint)
    decision = np.asarray(decision, dtype=np.float64)
    if decision.shape != joint.shape:
        raise ValueError("decision rule must have the same (s, u) shape as the joint")
    total = 0.0
    for s in range(joint.shape[0]):
        for u in range(joint.shape[1]):
            if joint[s, u] > 0.0:
                total += joint[s, u] * alpha_loss(decision[s, u], alpha)
    return total
