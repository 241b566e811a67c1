"""Overlay graphs for querying and baselines.

The peer-view-induced directed graph, a Barabási–Albert preferential
attachment generator (degree-matched baseline), and hop-distance analytics
over document holders.
"""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass, field
from typing import Hashable, Mapping, Sequence

from .expansion import PeerView
from .workload import UserProfile

Node = Hashable


@dataclass
class OverlayGraph:
    nodes: list[Node]
    out_edges: dict[Node, list[Node]]
    directed: bool = True
    _in_edges: dict[Node, list[Node]] | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        node_set = set(self.nodes)
        for u, vs in self.out_edges.items():
            if u not in node_set:
                raise ValueError(f"edge source {u!r} not a node")
            for v in vs:
                if v == u:
                    raise ValueError(f"self-loop at {u!r}")
                if v not in node_set:
                    raise ValueError(f"edge target {v!r} not a node")

    def neighbors(self, u: Node) -> list[Node]:
        return self.out_edges.get(u, [])

    @property
    def edge_count(self) -> int:
        return sum(len(vs) for vs in self.out_edges.values())

    @property
    def mean_out_degree(self) -> float:
        return self.edge_count / len(self.nodes) if self.nodes else 0.0

    def in_edges(self) -> dict[Node, list[Node]]:
        if self._in_edges is None:
            inv: dict[Node, list[Node]] = {u: [] for u in self.nodes}
            for u, vs in self.out_edges.items():
                for v in vs:
                    inv[v].append(u)
            self._in_edges = inv
        return self._in_edges


def graph_from_views(
    views: Mapping[str, PeerView], edge_source: str = "known_users"
) -> OverlayGraph:
    """Directed graph with edge u->v iff v is in u's selected list."""
    if edge_source not in ("known_users", "closest_users"):
        raise ValueError(f"edge_source must be known_users|closest_users, got {edge_source!r}")
    nodes = sorted(views)
    out: dict[Node, list[Node]] = {}
    for uid in nodes:
        view = views[uid]
        if edge_source == "known_users":
            out[uid] = sorted(view.known_users)
        else:
            out[uid] = list(view.closest_users)
    return OverlayGraph(nodes=list(nodes), out_edges=out, directed=True)


def barabasi_albert(
    n: int, m: int, rng_seed: int, labels: Sequence[Node] | None = None
) -> OverlayGraph:
    """Preferential attachment: an m-clique seed, then each new node attaches
    to m distinct existing nodes sampled proportionally to current degree.

    Undirected, stored as symmetric directed edges. Edge count is exactly
    C(m, 2) + m * (n - m). Connected by construction.
    """
    if not 1 <= m < n:
        raise ValueError(f"need 1 <= m < n, got m={m}, n={n}")
    if labels is None:
        labels = [str(i) for i in range(n)]
    labels = list(labels)
    if len(labels) != n:
        raise ValueError("labels length must equal n")

    rng = random.Random(rng_seed)
    adj: dict[Node, list[Node]] = {u: [] for u in labels}

    def connect(u: Node, v: Node) -> None:
        adj[u].append(v)
        adj[v].append(u)

    repeated: list[int] = []  # node indices, one entry per degree unit
    for i in range(m):
        for j in range(i + 1, m):
            connect(labels[i], labels[j])
            repeated.extend((i, j))

    for i in range(m, n):
        targets: set[int] = set()
        if m == 1 and not repeated:  # first attachment of an edgeless seed
            targets.add(0)
        while len(targets) < m:
            targets.add(rng.choice(repeated))
        for t in sorted(targets):
            connect(labels[i], labels[t])
            repeated.append(t)
        repeated.extend([i] * m)

    label_pos = {u: i for i, u in enumerate(labels)}
    out = {u: sorted(vs, key=label_pos.__getitem__) for u, vs in adj.items()}
    return OverlayGraph(nodes=labels, out_edges=out, directed=False)


@dataclass
class _CompleteOverlay(OverlayGraph):
    """Implicit everyone-knows-everyone topology; adjacency built on demand
    so the baseline stays O(N) in memory even at full-corpus scale."""

    def __post_init__(self) -> None:
        if len(set(self.nodes)) != len(self.nodes):
            raise ValueError("duplicate node labels")

    def neighbors(self, u: Node) -> list[Node]:
        return [v for v in self.nodes if v != u]

    @property
    def edge_count(self) -> int:
        n = len(self.nodes)
        return n * (n - 1)

    def in_edges(self) -> dict[Node, list[Node]]:
        return {u: self.neighbors(u) for u in self.nodes}


def complete_graph(nodes: Sequence[Node]) -> OverlayGraph:
    """Everyone knows everyone (the random-query baseline's topology)."""
    return _CompleteOverlay(nodes=list(nodes), out_edges={}, directed=False)


def _holders(profiles: Mapping[str, UserProfile], target_doc: str) -> set[str]:
    return {u for u, p in profiles.items() if target_doc in p.train_docs}


def min_hop_to_document(
    graph: OverlayGraph,
    profiles: Mapping[str, UserProfile],
    source_user: str,
    target_doc: str,
) -> int | None:
    """BFS hop count from source to the nearest train-set holder of the doc.

    0 when the source itself holds it; None when no holder is reachable.
    """
    if source_user not in set(graph.nodes):
        raise ValueError(f"unknown user {source_user!r}")
    known_docs = set()
    for p in profiles.values():
        known_docs |= p.train_docs
        known_docs |= p.test_docs
    if target_doc not in known_docs:
        raise ValueError(f"unknown document {target_doc!r}")
    holders = _holders(profiles, target_doc)
    if not holders:
        return None
    if source_user in holders:
        return 0
    dist = {source_user: 0}
    queue = deque([source_user])
    while queue:
        u = queue.popleft()
        for v in graph.neighbors(u):
            if v in dist:
                continue
            dist[v] = dist[u] + 1
            if v in holders:
                return dist[v]
            queue.append(v)
    return None


@dataclass
class HopHistogram:
    counts: dict[int, int]
    unreachable: int

    @property
    def total(self) -> int:
        return sum(self.counts.values()) + self.unreachable


def hop_histogram(
    graph: OverlayGraph,
    profiles: Mapping[str, UserProfile],
    samples: Sequence[tuple[str, str]],
) -> HopHistogram:
    """Minimum-hop distribution over (user, target_doc) samples.

    Unreachable targets get their own bucket, never a sentinel distance.
    Grouped by document: one reverse multi-source BFS from the holder set
    serves every sample of that document.
    """
    by_doc: dict[str, list[str]] = {}
    for user, doc in samples:
        by_doc.setdefault(doc, []).append(user)

    in_edges = graph.in_edges()
    counts: dict[int, int] = {}
    unreachable = 0
    for doc, users in by_doc.items():
        holders = _holders(profiles, doc)
        if not holders:
            unreachable += len(users)
            continue
        dist: dict[Node, int] = {h: 0 for h in holders if h in in_edges}
        queue = deque(dist)
        while queue:
            v = queue.popleft()
            for u in in_edges[v]:
                if u not in dist:
                    dist[u] = dist[v] + 1
                    queue.append(u)
        for user in users:
            d = dist.get(user)
            if d is None:
                unreachable += 1
            else:
                counts[d] = counts.get(d, 0) + 1
    return HopHistogram(counts=counts, unreachable=unreachable)


def write_edge_list(graph: OverlayGraph, path) -> None:
    """`u\\tv` per line, deterministic order."""
    with open(path, "w", encoding="utf-8") as fh:
        for u in graph.nodes:
            for v in graph.out_edges.get(u, []):
                fh.write(f"{u}\t{v}\n")
