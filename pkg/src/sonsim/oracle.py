"""Exhaustive ground truth: global top-k cosine neighbors per user.

Always the full O(N^2) pairwise scan; results can be cached to disk keyed by
a content hash of the workload so repeat runs pay the cost once.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Mapping

import numpy as np

from .workload import UserProfile, index_from_profiles

if TYPE_CHECKING:
    from .expansion import PeerView


@dataclass
class GroundTruth:
    top_k: dict[str, list[str]]
    k: int


def workload_hash(profiles: Mapping[str, UserProfile]) -> str:
    """Content hash over user ids and embeddings (split sets don't matter here)."""
    digest = hashlib.sha256()
    for uid in sorted(profiles):
        digest.update(uid.encode("utf-8"))
        digest.update(b"\x00")
        digest.update(np.ascontiguousarray(profiles[uid].user_embedding, dtype=np.float64).tobytes())
    return digest.hexdigest()


def compute_ground_truth(
    profiles: Mapping[str, UserProfile],
    k: int = 50,
    cache_dir: str | Path | None = None,
) -> GroundTruth:
    """Exact top-k cosine neighbors for every user.

    Ties break by ascending user id. List length is min(k, N-1).
    """
    if len(profiles) < 2:
        raise ValueError("ground truth needs at least 2 users")
    cache_path = None
    if cache_dir is not None:
        cache_path = Path(cache_dir) / f"truth_{workload_hash(profiles)}_k{k}.json"
        if cache_path.exists():
            payload = json.loads(cache_path.read_text(encoding="utf-8"))
            return GroundTruth(top_k=payload["top_k"], k=payload["k"])

    index = index_from_profiles(profiles)
    ids = index.ids
    n = len(ids)
    take = min(k, n - 1)
    top: dict[str, list[str]] = {}
    block = 512
    order_key = np.arange(n)
    for start in range(0, n, block):
        stop = min(start + block, n)
        sims = index.matrix[start:stop] @ index.matrix.T
        for r in range(stop - start):
            row = sims[r].copy()
            row[start + r] = -np.inf  # exclude self
            # primary: similarity desc; secondary: user id asc (ids are sorted)
            order = np.lexsort((order_key, -row))
            top[ids[start + r]] = [ids[j] for j in order[:take]]

    truth = GroundTruth(top_k=top, k=k)
    if cache_path is not None:
        cache_path.parent.mkdir(parents=True, exist_ok=True)
        cache_path.write_text(json.dumps({"k": k, "top_k": top}, sort_keys=True), encoding="utf-8")
    return truth


def recall_of_50(view: "PeerView", truth: GroundTruth) -> int:
    """|closest_users ∩ global top-k| — absolute recall out of k."""
    return len(set(view.closest_users) & set(truth.top_k[view.user_id]))
