"""Hop-limited query engines.

All engines share the same skeleton: the current user does a perfect local
lookup (train-set holdings only), and on a miss the query is forwarded to
one neighbor until the hop budget runs out. They differ in how the next
neighbor is chosen: greedy by query-to-user cosine (chain hop), uniformly at
random (baseline), or greedy over diffused embeddings (personalized-pagerank
comparator). Greedy engines restrict forwards to unvisited users so the
argmax cannot ping-pong; a chain with no unvisited neighbor terminates. The
random walk instead falls back to any neighbor once all are visited.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .embedding import Embedding, UnitIndex, unit
from .graphs import OverlayGraph
from .workload import UserProfile, index_from_profiles


@dataclass(frozen=True)
class QueryTask:
    origin_user: str
    query_embedding: Embedding
    target_doc: str
    max_hops: int

    def __post_init__(self) -> None:
        if self.max_hops < 0:
            raise ValueError("max_hops must be >= 0")


@dataclass
class QueryOutcome:
    found: bool
    hops_used: int
    path: list[str]
    messages_sent: int

    @property
    def terminal_user(self) -> str:
        return self.path[-1]


def local_lookup(profile: UserProfile, target_doc: str) -> str | None:
    """Perfect local search over holdings: train docs only, no mistakes.

    Test documents are withheld from holdings, so a user cannot serve its
    own test set.
    """
    return target_doc if target_doc in profile.train_docs else None


def _neighbor_lists(views_or_graph, neighbor_source: str):
    if isinstance(views_or_graph, OverlayGraph):
        return views_or_graph
    if neighbor_source == "known_users":
        return {u: sorted(v.known_users) for u, v in views_or_graph.items()}
    if neighbor_source == "closest_users":
        return {u: list(v.closest_users) for u, v in views_or_graph.items()}
    raise ValueError(f"neighbor_source must be known_users|closest_users, got {neighbor_source!r}")


def _neighbors_of(source, user: str) -> list[str]:
    if isinstance(source, OverlayGraph):
        return source.neighbors(user)
    return source.get(user, [])


def _run_chain(
    task: QueryTask,
    source,
    profiles: Mapping[str, UserProfile],
    pick: Callable[[list[str], set[str]], str | None],
) -> QueryOutcome:
    if task.origin_user not in profiles:
        raise ValueError(f"unknown origin user {task.origin_user!r}")
    current = task.origin_user
    path = [current]
    visited = {current}
    while True:
        if local_lookup(profiles[current], task.target_doc) is not None:
            hops = len(path) - 1
            return QueryOutcome(True, hops, path, hops)
        if len(path) - 1 >= task.max_hops:
            break
        nxt = pick(_neighbors_of(source, current), visited)
        if nxt is None:
            break
        current = nxt
        path.append(current)
        visited.add(current)
    hops = len(path) - 1
    return QueryOutcome(False, hops, path, hops)


def _greedy_pick(matrix: np.ndarray, index: Mapping[str, int], q: np.ndarray):
    def pick(neighbors: list[str], visited: set[str]) -> str | None:
        candidates = sorted(v for v in neighbors if v not in visited)
        if not candidates:
            return None  # dead end: greedy chains terminate rather than revisit
        rows = matrix[[index[c] for c in candidates]]
        return candidates[int(np.argmax(rows @ q))]  # argmax keeps the smaller id on ties

    return pick


def chain_hop(
    task: QueryTask,
    views_or_graph,
    profiles: Mapping[str, UserProfile],
    neighbor_source: str = "known_users",
    kernel: UnitIndex | None = None,
) -> QueryOutcome:
    """Greedy semantic forwarding: next hop maximizes cosine(query, user).

    Ties break toward the smaller user id. `neighbor_source` applies when
    peer views are passed instead of a prebuilt graph.
    """
    if kernel is None:
        kernel = index_from_profiles(profiles)
    source = _neighbor_lists(views_or_graph, neighbor_source)
    q = unit(np.asarray(task.query_embedding, dtype=np.float64))
    return _run_chain(task, source, profiles, _greedy_pick(kernel.matrix, kernel.index, q))


def random_walk_query(
    task: QueryTask,
    graph: OverlayGraph,
    profiles: Mapping[str, UserProfile],
    rng_seed: int | str,
) -> QueryOutcome:
    """Uniformly random forwarding, preferring unvisited neighbors.

    Falls back to a uniformly random already-visited neighbor when every
    neighbor has been seen, so walks on small graphs can keep moving.
    """
    rng = random.Random(rng_seed)

    def pick(neighbors: list[str], visited: set[str]) -> str | None:
        if not neighbors:
            return None
        fresh = [v for v in neighbors if v not in visited]
        return rng.choice(fresh) if fresh else rng.choice(list(neighbors))

    return _run_chain(task, graph, profiles, pick)


@dataclass
class DiffusionState:
    alpha: float
    diffused: dict[str, Embedding]
    iterations: int
    _unit_cache: tuple | None = None

    def unit_rows(self) -> tuple[np.ndarray, dict[str, int]]:
        """Memoized row-normalized matrix over the diffused embeddings."""
        if self._unit_cache is None:
            ids = sorted(self.diffused)
            index = {u: i for i, u in enumerate(ids)}
            mat = np.asarray([self.diffused[u] for u in ids], dtype=np.float64)
            norms = np.linalg.norm(mat, axis=1, keepdims=True)
            norms[norms == 0.0] = 1.0
            self._unit_cache = (mat / norms, index)
        return self._unit_cache


def diffuse_embeddings(
    graph: OverlayGraph,
    profiles: Mapping[str, UserProfile],
    alpha: float,
    iterations: int = 50,
    tol: float = 1e-8,
) -> DiffusionState:
    """Personalized-pagerank style embedding diffusion over the graph.

    Iterates E <- alpha * E0 + (1 - alpha) * W @ E, where E0 holds the native
    user embeddings and W is the row-normalized adjacency; dangling rows keep
    their own current embedding. alpha=1 reproduces E0 exactly. Stops when
    the largest componentwise change drops below `tol` or at the iteration
    cap.
    """
    if not graph.nodes:
        raise ValueError("diffusion needs a nonempty graph")
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must be in (0, 1], got {alpha}")
    ids = sorted(graph.nodes)
    pos = {u: i for i, u in enumerate(ids)}
    e0 = np.asarray([profiles[u].user_embedding for u in ids], dtype=np.float64)

    targets: list[np.ndarray] = []
    dangling = np.zeros(len(ids), dtype=bool)
    for i, u in enumerate(ids):
        nbrs = graph.neighbors(u)
        if nbrs:
            targets.append(np.asarray([pos[v] for v in nbrs], dtype=np.intp))
        else:
            targets.append(np.empty(0, dtype=np.intp))
            dangling[i] = True

    current = e0.copy()
    used = 0
    for _ in range(iterations):
        used += 1
        spread = np.empty_like(current)
        for i in range(len(ids)):
            if dangling[i]:
                spread[i] = current[i]
            else:
                spread[i] = current[targets[i]].mean(axis=0)
        nxt = alpha * e0 + (1.0 - alpha) * spread
        change = float(np.max(np.abs(nxt - current)))
        current = nxt
        if change < tol:
            break
    return DiffusionState(
        alpha=alpha,
        diffused={u: current[pos[u]] for u in ids},
        iterations=used,
    )


def diffusion_query(
    task: QueryTask,
    graph: OverlayGraph,
    state: DiffusionState,
    profiles: Mapping[str, UserProfile],
) -> QueryOutcome:
    """Chain-hop forwarding scored against diffused embeddings.

    Local lookups still consult real holdings; only the forwarding score
    changes. With alpha=1 the diffused embeddings equal the native ones and
    this engine follows chain_hop's exact path on the same graph.
    """
    mat, index = state.unit_rows()
    q = unit(np.asarray(task.query_embedding, dtype=np.float64))
    return _run_chain(task, graph, profiles, _greedy_pick(mat, index, q))
