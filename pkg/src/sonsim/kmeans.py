"""Two-means clustering used when a leaf splits.

Lloyd iterations with a deterministic seeded initialization: the first
centroid is a uniformly random point, the second is the point farthest from
it. No k > 2 support; leaf splits are always binary.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .embedding import Embedding

LABEL_A = "A"
LABEL_B = "B"


@dataclass
class ClusterResult:
    centroid_a: Embedding
    centroid_b: Embedding
    assignment: dict[str, str]  # user_id -> LABEL_A | LABEL_B
    iterations_used: int
    sse_history: list[float] = field(default_factory=list)

    @property
    def degenerate(self) -> bool:
        """True when all inputs were identical and the split is arbitrary."""
        return bool(np.array_equal(self.centroid_a, self.centroid_b))


def _sse(mat: np.ndarray, labels: np.ndarray, ca: np.ndarray, cb: np.ndarray) -> float:
    da = mat - ca
    db = mat - cb
    per_point = np.where(labels == 0, np.einsum("ij,ij->i", da, da), np.einsum("ij,ij->i", db, db))
    return float(per_point.sum())


def two_means(
    points: Mapping[str, Embedding],
    rng_seed: int,
    max_iters: int = 100,
    tol: float = 1e-9,
) -> ClusterResult:
    """Cluster labeled points into two groups by Euclidean distance.

    Deterministic given the seed and the iteration order of `points`.
    Guarantees both clusters nonempty when at least two distinct points
    exist (empty-cluster repair moves the farthest point over). All-identical
    input is detected up front and split half/half in input order, with both
    centroids equal to the common point.
    """
    ids = list(points.keys())
    n = len(ids)
    if n < 2:
        raise ValueError("two_means needs at least 2 points")
    mat = np.asarray([points[i] for i in ids], dtype=np.float64)

    rng = random.Random(rng_seed)
    first_idx = rng.randrange(n)
    dist_sq = np.einsum("ij,ij->i", mat - mat[first_idx], mat - mat[first_idx])
    second_idx = int(np.argmax(dist_sq))

    if dist_sq[second_idx] == 0.0:  # farthest point coincides => all points identical
        # no semantic separation: arbitrary but deterministic half split
        half = (n + 1) // 2
        assignment = {uid: (LABEL_A if i < half else LABEL_B) for i, uid in enumerate(ids)}
        centroid = mat[0].copy()
        labels = np.array([0] * half + [1] * (n - half))
        return ClusterResult(
            centroid_a=centroid,
            centroid_b=centroid.copy(),
            assignment=assignment,
            iterations_used=0,
            sse_history=[_sse(mat, labels, centroid, centroid)],
        )

    ca = mat[first_idx].copy()
    cb = mat[second_idx].copy()
    labels = np.zeros(n, dtype=np.int64)
    sse_history: list[float] = []
    iterations = 0

    for _ in range(max_iters):
        iterations += 1
        da = np.einsum("ij,ij->i", mat - ca, mat - ca)
        db = np.einsum("ij,ij->i", mat - cb, mat - cb)
        labels = (db < da).astype(np.int64)  # ties (da == db) stay in A

        # empty-cluster repair: hand the farthest point to the empty side
        if labels.sum() == 0:
            labels[int(np.argmax(da))] = 1
        elif labels.sum() == n:
            labels[int(np.argmax(db))] = 0

        new_ca = mat[labels == 0].mean(axis=0)
        new_cb = mat[labels == 1].mean(axis=0)
        movement = max(
            float(np.linalg.norm(new_ca - ca)),
            float(np.linalg.norm(new_cb - cb)),
        )
        ca, cb = new_ca, new_cb

        sse = _sse(mat, labels, ca, cb)
        if sse_history:
            assert sse <= sse_history[-1] + 1e-9, "SSE increased across a Lloyd iteration"
        sse_history.append(sse)

        if movement < tol:
            break

    assignment = {uid: (LABEL_A if labels[i] == 0 else LABEL_B) for i, uid in enumerate(ids)}
    return ClusterResult(
        centroid_a=ca,
        centroid_b=cb,
        assignment=assignment,
        iterations_used=iterations,
        sse_history=sse_history,
    )
