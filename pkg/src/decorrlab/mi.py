"""Nonparametric mutual-information certification of representations.

Differential entropy is estimated from k-th-nearest-neighbor distances
(Kozachenko-Leonenko):

    H(X) ~= psi(N) - psi(k) + log c_d + (d/N) sum_i log r_i,

with c_d the d-dimensional unit-ball volume and r_i the Euclidean
distance from sample i to its k-th nearest neighbor.  Mutual information
with a discrete label is the entropy drop

    I(X; S) = H(X) - sum_s p(s) H(X | S=s),

with empirical class priors.  Adversarial training certifies against the
adversary it trained; a small estimated MI certifies against every
adversary, seen or unseen, which is why the sweep reports it.

Neighbor search is exact brute force (chunked O(n^2) distances); at the
tens-of-thousands scale used here that is both fast enough and trivially
deterministic.  For high-dimensional representations, project first:
train a classifier of S, take its penultimate-layer embedding, and
optionally reduce with pca_project before estimating.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .numerics import digamma, log_unit_ball_volume

__all__ = ["knn_entropy", "mi_with_discrete_label", "MiEstimate", "pca_project"]

DEFAULT_K = 4

_JITTER = 1e-10


def _as_cloud(points) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2:
        raise ValueError("points must be an (n, d) array")
    return pts


def _dedup_jitter(pts: np.ndarray) -> np.ndarray:
    """Perturb exact duplicate rows so no k-NN radius is zero.

    The perturbation is a deterministic function of the data (occurrence
    rank within each duplicate group, at 1e-10 scale), so estimates stay
    reproducible.
    """
    _, inverse, counts = np.unique(pts, axis=0, return_inverse=True, return_counts=True)
    if counts.max() <= 1:
        return pts
    n_dupes = int((counts[inverse] > 1).sum())
    warnings.warn(f"{n_dupes} duplicate points jittered before entropy estimation")
    scale = _JITTER * max(1.0, float(np.abs(pts).max()))
    out = pts.copy()
    seen: dict[int, int] = {}
    for i, group in enumerate(inverse):
        rank = seen.get(int(group), 0)
        seen[int(group)] = rank + 1
        if rank:
            out[i] += rank * scale
    return out


def _kth_neighbor_1d(values: np.ndarray, k: int) -> np.ndarray:
    # In one dimension the k-th nearest neighbor of a point is among its k
    # predecessors and k successors in sorted order: O(n k) exact search.
    order = np.argsort(values, kind="stable")
    x = values[order]
    n = x.size
    candidates = np.full((n, 2 * k), np.inf)
    for offset in range(1, k + 1):
        gaps = x[offset:] - x[:-offset]
        candidates[offset:, offset - 1] = gaps
        candidates[:-offset, k + offset - 1] = gaps
    kth = np.partition(candidates, k - 1, axis=1)[:, k - 1]
    radii = np.empty(n)
    radii[order] = kth
    return radii


def _kth_neighbor_distances(pts: np.ndarray, k: int, chunk: int = 512) -> np.ndarray:
    n = pts.shape[0]
    if pts.shape[1] == 1:
        return _kth_neighbor_1d(pts[:, 0], k)
    sq_norms = (pts**2).sum(axis=1)
    radii = np.empty(n)
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        block = pts[start:stop]
        d2 = sq_norms[start:stop, None] + sq_norms[None, :] - 2.0 * block @ pts.T
        np.maximum(d2, 0.0, out=d2)
        # k-th neighbor excluding self: self-distance 0 always sorts first
        part = np.partition(d2, k, axis=1)[:, k]
        radii[start:stop] = np.sqrt(part)
    return radii


def knn_entropy(points, k: int = DEFAULT_K) -> float:
    """Kozachenko-Leonenko differential entropy estimate, in nats."""
    pts = _as_cloud(points)
    n, d = pts.shape
    if k < 1:
        raise ValueError("neighbor order k must be >= 1")
    if n <= k:
        raise ValueError(f"need more than k={k} samples, got {n}")
    pts = _dedup_jitter(pts)
    radii = _kth_neighbor_distances(pts, k)
    return float(
        digamma(n) - digamma(k) + log_unit_ball_volume(d) + d * np.mean(np.log(radii))
    )


@dataclass(frozen=True)
class MiEstimate:
    value: float  # clamped at zero for reporting
    raw: float  # the uncorrected difference of entropy estimates


def mi_with_discrete_label(points, labels, k: int = DEFAULT_K) -> MiEstimate:
    """Estimated I(X; S) for a discrete label S, in nats.

    Every class must contribute more than k samples.  The raw estimate can
    dip below zero from estimator noise; the reported value clamps it.
    """
    pts = _as_cloud(points)
    labels = np.asarray(labels)
    if labels.shape != (pts.shape[0],):
        raise ValueError("labels must be a 1-d array matching the sample count")
    total = knn_entropy(pts, k)
    conditional = 0.0
    for value in np.unique(labels):
        mask = labels == value
        count = int(mask.sum())
        if count <= k:
            raise ValueError(f"class {value!r} has {count} samples; needs more than k={k}")
        conditional += (count / pts.shape[0]) * knn_entropy(pts[mask], k)
    raw = total - conditional
    return MiEstimate(value=max(raw, 0.0), raw=raw)


def pca_project(points, components: int) -> np.ndarray:
    """Center the cloud and project onto the top principal components.

    Deterministic: symmetric eigensolver, eigenvalues in descending order,
    each eigenvector's sign fixed so its largest-magnitude coordinate is
    positive.
    """
    pts = _as_cloud(points)
    n, d = pts.shape
    if not (1 <= components <= d):
        raise ValueError(f"components must lie in [1, {d}], got {components}")
    centered = pts - pts.mean(axis=0)
    cov = centered.T @ centered / max(n - 1, 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1][:components]
    basis = eigvecs[:, order]
    for j in range(basis.shape[1]):
        pivot = np.argmax(np.abs(basis[:, j]))
        if basis[pivot, j] < 0:
            basis[:, j] = -basis[:, j]
    return centered @ basis
