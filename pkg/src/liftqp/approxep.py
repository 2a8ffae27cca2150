"""Rotational-orbit detection for Euclidean point sets.

Two points lie in the same rotational orbit exactly when their sorted
distance vectors to all other points coincide, so exact orbits reduce
to grouping identical sorted rows of the distance matrix.  The
approximate pipeline relaxes every step: optionally whiten the data
(exposes axis scalings), compute distances to a random anchor subset,
sort each row, and cluster the sorted rows with k-means under an orbit
budget.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .qpcore import Partition

EXACT_LIMIT = 5000
DEFAULT_DIST_TOL = 1e-9


@dataclass(frozen=True)
class ApproxConfig:
    n_orbits: int
    n_anchors: int = 0  # 0 means use every point as an anchor
    whiten: bool = False
    seed: int = 0
    cluster_iters: int = 100
    anchor_method: str = "uniform"  # or "kmeans++" for spread-out anchors

    def __post_init__(self):
        if self.n_orbits < 1:
            raise ValueError("n_orbits must be >= 1")
        if self.n_anchors < 0:
            raise ValueError("n_anchors must be >= 0")
        if self.cluster_iters < 1:
            raise ValueError("cluster_iters must be >= 1")
        if self.anchor_method not in ("uniform", "kmeans++"):
            raise ValueError("anchor_method must be 'uniform' or 'kmeans++'")


def _as_points(points):
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise ValueError("points must be a 2-d array (rows are points)")
    if not np.all(np.isfinite(points)):
        raise ValueError("points must be finite")
    return points


def _pairwise_distances(a, b):
    sq = (
        np.sum(a * a, axis=1)[:, None]
        + np.sum(b * b, axis=1)[None, :]
        - 2.0 * (a @ b.T)
    )
    return np.sqrt(np.maximum(sq, 0.0))


def _group_rows_within_tol(rows, tol):
    """Group rows equal within tol, swept in lexicographic order.

    Sorting on the raw values would let sub-tolerance noise in early
    columns interleave distinct groups, so the sweep orders rows by
    their tol-quantized view (which makes near-equal rows adjacent) and
    then merges neighbors whose raw difference stays within tol.
    """
    n = rows.shape[0]
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    quantized = np.round(rows / tol)
    order = np.lexsort(quantized.T[::-1])
    labels = np.empty(n, dtype=np.int64)
    current = 0
    labels[order[0]] = 0
    for prev, cur in zip(order[:-1], order[1:]):
        if rows.shape[1] and np.max(np.abs(rows[cur] - rows[prev])) > tol:
            current += 1
        labels[cur] = current
    return labels


def exact_orbits(points, dist_tol=DEFAULT_DIST_TOL):
    """Partition points by equality of sorted distances to all others."""
    points = _as_points(points)
    n = points.shape[0]
    if n > EXACT_LIMIT:
        raise ValueError(f"exact_orbits limited to n <= {EXACT_LIMIT}")
    dist = _pairwise_distances(points, points)
    # drop the self column, then sort each row
    signatures = np.sort(
        dist[~np.eye(n, dtype=bool)].reshape(n, n - 1) if n > 1 else np.zeros((n, 0)),
        axis=1,
    )
    return Partition(n, _group_rows_within_tol(signatures, dist_tol))


def whiten(points, ridge_scale=1e-8):
    """Center the points and map them to identity covariance (ZCA).

    Uses the population covariance X'X / n.  A singular or
    underdetermined covariance is ridge-regularized (ridge_scale *
    trace / d) with a warning; the output covariance is then only
    approximately the identity.
    """
    points = _as_points(points)
    n, d = points.shape
    centered = points - points.mean(axis=0)
    cov = centered.T @ centered / n
    eigvals, eigvecs = np.linalg.eigh(cov)
    floor = ridge_scale * max(np.trace(cov) / max(d, 1), 1.0)
    if n < d or eigvals[0] <= floor:
        warnings.warn(
            "covariance is singular or nearly so; whitening with a ridge",
            RuntimeWarning,
            stacklevel=2,
        )
        ridge = ridge_scale * np.trace(cov) / max(d, 1)
        eigvals = eigvals + max(ridge, ridge_scale)
    transform = eigvecs @ np.diag(1.0 / np.sqrt(eigvals)) @ eigvecs.T
    return centered @ transform


def _kmeans_pp_indices(rows, k, rng):
    n = rows.shape[0]
    chosen = [int(rng.integers(n))]
    for _ in range(1, k):
        d2 = np.min(
            [np.sum((rows - rows[c]) ** 2, axis=1) for c in chosen], axis=0
        )
        total = d2.sum()
        if total <= 0.0:
            break  # every remaining point duplicates a chosen one
        chosen.append(int(rng.choice(n, p=d2 / total)))
    return np.asarray(chosen)


def _kmeans_pp_init(rows, k, rng):
    return rows[_kmeans_pp_indices(rows, k, rng)].copy()


def _lloyd(rows, centers, iters):
    labels = None
    for _ in range(iters):
        dist = _pairwise_distances(rows, centers)
        new_labels = np.argmin(dist, axis=1)
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for j in range(centers.shape[0]):
            members = rows[labels == j]
            if members.size:
                centers[j] = members.mean(axis=0)
    return labels, centers


def approx_orbits(points, cfg):
    """k-means orbit estimate over sorted anchor-distance rows.

    Deterministic for a fixed seed.  Empty clusters trigger up to 10
    re-seeded restarts; if they persist (fewer distinct signatures than
    the budget) the survivors are returned with a warning.
    """
    points = _as_points(points)
    n = points.shape[0]
    if cfg.n_anchors > n:
        raise ValueError(f"n_anchors = {cfg.n_anchors} exceeds n = {n}")
    if cfg.whiten:
        points = whiten(points)
    rng = np.random.default_rng(cfg.seed)
    if cfg.n_anchors and cfg.n_anchors < n:
        if cfg.anchor_method == "kmeans++":
            idx = np.sort(_kmeans_pp_indices(points, cfg.n_anchors, rng))
        else:
            idx = np.sort(rng.choice(n, size=cfg.n_anchors, replace=False))
        anchors = points[idx]
    else:
        anchors = points
    rows = np.sort(_pairwise_distances(points, anchors), axis=1)

    k = min(cfg.n_orbits, n)
    labels = None
    for _ in range(10):
        centers = _kmeans_pp_init(rows, k, rng)
        labels, centers = _lloyd(rows, centers, cfg.cluster_iters)
        if len(np.unique(labels)) == centers.shape[0] == k:
            break
    if labels is None or len(np.unique(labels)) < k:
        warnings.warn(
            "k-means budget exceeds the number of distinct signatures; "
            "returning fewer classes",
            RuntimeWarning,
            stacklevel=2,
        )
    return Partition(n, labels)
