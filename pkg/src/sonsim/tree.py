"""Hierarchically clustered user tree with on-the-fly cloning.

Users are inserted one at a time, descending from the root: at every split
node the Euclidean distances to the two child centroids are compared, and a
user whose distances differ by less than the clone threshold descends both
branches ("cloning"). A leaf that exceeds its capacity immediately splits via
two-means, re-assigning (and possibly re-cloning) its residents against the
new centroids. The finished tree is immutable and supports read-side
traversal, breadth-first neighbor collection over leaves, and statistics.
"""

from __future__ import annotations

import bisect
import json
import random
import statistics
from collections import deque
from dataclasses import dataclass
from typing import Iterator, Mapping

import numpy as np

from .embedding import DimensionMismatchError, Embedding
from .kmeans import two_means
from .workload import UserProfile


@dataclass(frozen=True)
class PlacementRef:
    """One position of a user in the tree; clone_index is dense per user."""

    user_id: str
    clone_index: int


@dataclass(frozen=True)
class TreeParams:
    leaf_capacity: int = 50
    clone_threshold: float = 0.0
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.leaf_capacity < 2:
            raise ValueError("leaf_capacity must be >= 2")
        if not np.isfinite(self.clone_threshold) or self.clone_threshold < 0:
            raise ValueError("clone_threshold must be finite and >= 0")


@dataclass
class LeafNode:
    node_id: int
    parent_id: int | None
    users: list[PlacementRef]


@dataclass
class SplitNode:
    node_id: int
    parent_id: int | None
    centroid_a: Embedding
    centroid_b: Embedding
    child_a: int
    child_b: int


class DuplicateUserError(ValueError):
    pass


class Tree:
    """Mutable during construction; treat as read-only afterwards."""

    def __init__(self, params: TreeParams, dim: int):
        self.params = params
        self.dim = dim
        self.nodes: dict[int, LeafNode | SplitNode] = {0: LeafNode(0, None, [])}
        self.root_id = 0
        self._next_node_id = 1
        self._rng = random.Random(params.rng_seed)
        self._embeddings: dict[str, Embedding] = {}
        self._clone_counters: dict[str, int] = {}
        self.user_placements: dict[str, list[int]] = {}
        self.comparisons = 0  # centroid-distance computations during insert traversals
        self.split_count = 0
        self.insertion_log: list[tuple[str, int]] = []  # (user, split_count after insert)
        self._frozen = False  # set on deserialized trees (no embeddings retained)

    # -- construction -------------------------------------------------------

    def insert_user(self, user_id: str, embedding: Embedding) -> set[int]:
        """Place a user (and any clones) into leaves; returns the leaf ids."""
        if self._frozen:
            raise RuntimeError("deserialized trees are read-only")
        if user_id in self.user_placements:
            raise DuplicateUserError(f"user {user_id!r} already in tree")
        emb = np.asarray(embedding, dtype=np.float64)
        if emb.shape != (self.dim,):
            raise DimensionMismatchError(f"embedding dim {emb.shape} != tree dim {self.dim}")
        self._embeddings[user_id] = emb

        pending = deque([self.root_id])
        while pending:
            nid = pending.popleft()
            node = self.nodes[nid]
            while isinstance(node, SplitNode):
                d1 = float(np.linalg.norm(emb - node.centroid_a))
                d2 = float(np.linalg.norm(emb - node.centroid_b))
                self.comparisons += 2
                if abs(d1 - d2) < self.params.clone_threshold:
                    pending.append(node.child_b)  # clone takes the other branch too
                    nid = node.child_a
                elif d1 <= d2:
                    nid = node.child_a
                else:
                    nid = node.child_b
                node = self.nodes[nid]
            self._place(user_id, nid)

        self.insertion_log.append((user_id, self.split_count))
        return set(self.user_placements[user_id])

    def _new_ref(self, user_id: str) -> PlacementRef:
        idx = self._clone_counters.get(user_id, 0)
        self._clone_counters[user_id] = idx + 1
        return PlacementRef(user_id, idx)

    def _place(self, user_id: str, leaf_id: int) -> None:
        leaf = self.nodes[leaf_id]
        assert isinstance(leaf, LeafNode)
        if any(ref.user_id == user_id for ref in leaf.users):
            return  # clones merging into the same leaf collapse to one entry
        leaf.users.append(self._new_ref(user_id))
        # placement lists stay sorted by node id: canonical, serialization-stable
        bisect.insort(self.user_placements.setdefault(user_id, []), leaf_id)
        if len(leaf.users) > self.params.leaf_capacity:
            self._split_leaf(leaf_id)

    def _split_leaf(self, leaf_id: int) -> None:
        leaf = self.nodes[leaf_id]
        assert isinstance(leaf, LeafNode)
        roster = list(leaf.users)
        points = {ref.user_id: self._embeddings[ref.user_id] for ref in roster}
        result = two_means(points, rng_seed=self._rng.getrandbits(63))
        ca, cb = result.centroid_a, result.centroid_b

        # (ref, side) per resident, judged against the fresh centroids
        plan: list[tuple[PlacementRef, str]] = []
        if result.degenerate:
            for ref in roster:
                plan.append((ref, result.assignment[ref.user_id]))
        else:
            for ref in roster:
                emb = points[ref.user_id]
                d1 = float(np.linalg.norm(emb - ca))
                d2 = float(np.linalg.norm(emb - cb))
                if abs(d1 - d2) < self.params.clone_threshold:
                    plan.append((ref, "AB"))
                else:
                    plan.append((ref, "A" if d1 <= d2 else "B"))
            size_a = sum(1 for _, side in plan if side != "B")
            size_b = sum(1 for _, side in plan if side != "A")
            if size_a == len(roster) or size_b == len(roster):
                # runaway guard: a child swallowing everyone would recurse
                # forever, so fall back to the hard two-means partition
                plan = [(ref, result.assignment[ref.user_id]) for ref in roster]

        id_a, id_b = self._next_node_id, self._next_node_id + 1
        self._next_node_id += 2
        leaf_a = LeafNode(id_a, leaf_id, [])
        leaf_b = LeafNode(id_b, leaf_id, [])
        for ref, side in plan:
            placements = self.user_placements[ref.user_id]
            placements.remove(leaf_id)
            if side in ("A", "AB"):
                leaf_a.users.append(ref)
                bisect.insort(placements, id_a)
            if side in ("B", "AB"):
                target = self._new_ref(ref.user_id) if side == "AB" else ref
                leaf_b.users.append(target)
                bisect.insort(placements, id_b)
        self.nodes[id_a] = leaf_a
        self.nodes[id_b] = leaf_b
        self.nodes[leaf_id] = SplitNode(leaf_id, leaf.parent_id, ca, cb, id_a, id_b)
        self.split_count += 1

    # -- read side ------------------------------------------------------------

    def leaves(self) -> Iterator[LeafNode]:
        for nid in sorted(self.nodes):
            node = self.nodes[nid]
            if isinstance(node, LeafNode):
                yield node

    def traverse(self, embedding: Embedding, clone_threshold: float = 0.0) -> list[int]:
        """Read-only descent; returns leaf ids reached (several when cloning)."""
        emb = np.asarray(embedding, dtype=np.float64)
        out: list[int] = []
        pending = deque([self.root_id])
        while pending:
            nid = pending.popleft()
            node = self.nodes[nid]
            while isinstance(node, SplitNode):
                d1 = float(np.linalg.norm(emb - node.centroid_a))
                d2 = float(np.linalg.norm(emb - node.centroid_b))
                if abs(d1 - d2) < clone_threshold:
                    pending.append(node.child_b)
                    nid = node.child_a
                elif d1 <= d2:
                    nid = node.child_a
                else:
                    nid = node.child_b
                node = self.nodes[nid]
            if nid not in out:
                out.append(nid)
        return out

    def bfs_collect(
        self,
        start_leaf: int,
        needed: int,
        exclude_user: str | None = None,
        rng: random.Random | None = None,
    ) -> list[PlacementRef]:
        """Gather placements from leaves in breadth-first tree-hop order.

        Starts at `start_leaf`, expands over parent/child links, shuffles
        each leaf's roster (when an rng is given), and stops once `needed`
        placements are collected. May return fewer on a small tree.
        """
        node = self.nodes[start_leaf]
        if not isinstance(node, LeafNode):
            raise ValueError(f"node {start_leaf} is not a leaf")
        out: list[PlacementRef] = []
        visited = {start_leaf}
        queue = deque([start_leaf])
        while queue and len(out) < needed:
            nid = queue.popleft()
            node = self.nodes[nid]
            if isinstance(node, LeafNode):
                members = [ref for ref in node.users if ref.user_id != exclude_user]
                if rng is not None:
                    rng.shuffle(members)
                take = min(len(members), needed - len(out))
                out.extend(members[:take])
                neighbors = [node.parent_id]
            else:
                neighbors = [node.parent_id, node.child_a, node.child_b]
            for nb in neighbors:
                if nb is not None and nb not in visited:
                    visited.add(nb)
                    queue.append(nb)
        return out

    # -- statistics -----------------------------------------------------------

    def height(self) -> int:
        best = 0
        stack = [(self.root_id, 0)]
        while stack:
            nid, depth = stack.pop()
            node = self.nodes[nid]
            if isinstance(node, LeafNode):
                best = max(best, depth)
            else:
                stack.append((node.child_a, depth + 1))
                stack.append((node.child_b, depth + 1))
        return best

    # -- serialization ----------------------------------------------------------

    def to_json(self) -> str:
        """Deterministic lossless dump (structure, centroids, rosters).

        User embeddings and RNG state are construction-time data and are not
        serialized; a loaded tree supports reads but not further insertion.
        """
        nodes = []
        for nid in sorted(self.nodes):
            node = self.nodes[nid]
            if isinstance(node, LeafNode):
                nodes.append(
                    {
                        "id": nid,
                        "kind": "leaf",
                        "parent": node.parent_id,
                        "users": [[ref.user_id, ref.clone_index] for ref in node.users],
                    }
                )
            else:
                nodes.append(
                    {
                        "id": nid,
                        "kind": "split",
                        "parent": node.parent_id,
                        "centroid_a": [float(x) for x in node.centroid_a],
                        "centroid_b": [float(x) for x in node.centroid_b],
                        "child_a": node.child_a,
                        "child_b": node.child_b,
                    }
                )
        payload = {
            "dim": self.dim,
            "params": {
                "leaf_capacity": self.params.leaf_capacity,
                "clone_threshold": self.params.clone_threshold,
                "rng_seed": self.params.rng_seed,
            },
            "root": self.root_id,
            "nodes": nodes,
        }
        return json.dumps(payload, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Tree":
        payload = json.loads(text)
        params = TreeParams(**payload["params"])
        tree = cls(params, payload["dim"])
        tree.nodes.clear()
        tree.root_id = payload["root"]
        for rec in payload["nodes"]:
            if rec["kind"] == "leaf":
                refs = [PlacementRef(uid, idx) for uid, idx in rec["users"]]
                tree.nodes[rec["id"]] = LeafNode(rec["id"], rec["parent"], refs)
                for ref in refs:
                    bisect.insort(tree.user_placements.setdefault(ref.user_id, []), rec["id"])
                    counter = tree._clone_counters.get(ref.user_id, 0)
                    tree._clone_counters[ref.user_id] = max(counter, ref.clone_index + 1)
            else:
                tree.nodes[rec["id"]] = SplitNode(
                    rec["id"],
                    rec["parent"],
                    np.asarray(rec["centroid_a"], dtype=np.float64),
                    np.asarray(rec["centroid_b"], dtype=np.float64),
                    rec["child_a"],
                    rec["child_b"],
                )
        tree._next_node_id = max(payload["root"], *(r["id"] for r in payload["nodes"])) + 1
        tree._frozen = True
        return tree


@dataclass
class TreeStats:
    height: int
    leaf_count: int
    leaf_sizes: list[int]
    users_per_leaf_hist: dict[int, int]
    clones_mean: float
    clones_median: float
    clones_std: float
    clones_per_user: dict[str, int]


def build_tree(profiles: Mapping[str, UserProfile], params: TreeParams) -> Tree:
    """Insert all users in seed-shuffled order."""
    if not profiles:
        raise ValueError("no profiles to insert")
    order = sorted(profiles)
    rng = random.Random(params.rng_seed)
    rng.shuffle(order)
    dim = len(profiles[order[0]].user_embedding)
    tree = Tree(params, dim)
    for uid in order:
        tree.insert_user(uid, profiles[uid].user_embedding)
    return tree


def tree_stats(tree: Tree) -> TreeStats:
    leaf_sizes = [len(leaf.users) for leaf in tree.leaves()]
    hist: dict[int, int] = {}
    for size in leaf_sizes:
        hist[size] = hist.get(size, 0) + 1
    clones = {u: len(p) for u, p in tree.user_placements.items()}
    counts = sorted(clones.values())
    return TreeStats(
        height=tree.height(),
        leaf_count=len(leaf_sizes),
        leaf_sizes=leaf_sizes,
        users_per_leaf_hist=hist,
        clones_mean=float(np.mean(counts)) if counts else 0.0,
        clones_median=float(statistics.median(counts)) if counts else 0.0,
        clones_std=float(np.std(counts)) if counts else 0.0,
        clones_per_user=clones,
    )
