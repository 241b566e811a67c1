"""Neighbor discovery and gossip-style refinement of peer views.

Initialization: every clone of a user gathers contacts from its leaf
neighborhood (breadth-first over nearby leaves); the union becomes the
user's known-users set, and the top slice by cosine similarity its
closest-users list. Each expansion round, every user asks one random close
peer for the single best introduction it can offer; strictly-closer
candidates are adopted. Rounds mutate views in place, sequentially, in a
per-round reshuffled order (the deterministic stand-in for asynchrony).
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from typing import Mapping

from .embedding import UnitIndex
from .oracle import GroundTruth, recall_of_50
from .tree import Tree
from .workload import UserProfile, index_from_profiles


@dataclass(frozen=True)
class ExpansionParams:
    contacts_per_clone: int = 50  # gathered from each clone's leaf neighborhood
    closest_list_size: int = 50
    rounds: int = 20
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.contacts_per_clone < 1 or self.closest_list_size < 1:
            raise ValueError("contacts_per_clone and closest_list_size must be >= 1")


class PeerView:
    """One user's discovered peers with similarity scores.

    Invariants: the owner appears in neither list; closest_users is exactly
    the top `closest_cap` of known_users by similarity to the owner, ties
    broken by ascending user id.
    """

    __slots__ = ("user_id", "known_users", "closest_users", "sims", "closest_cap")

    def __init__(self, user_id: str, closest_cap: int):
        self.user_id = user_id
        self.known_users: set[str] = set()
        self.sims: dict[str, float] = {}
        self.closest_users: list[str] = []
        self.closest_cap = closest_cap

    def add_known(self, other: str, sim: float) -> None:
        if other == self.user_id:
            return
        self.known_users.add(other)
        self.sims[other] = sim

    def recompute_closest(self) -> None:
        ranked = sorted(self.known_users, key=lambda u: (-self.sims[u], u))
        self.closest_users = ranked[: self.closest_cap]

    def worst_closest_sim(self) -> float:
        return self.sims[self.closest_users[-1]]


def init_views(
    tree: Tree,
    profiles: Mapping[str, UserProfile],
    params: ExpansionParams,
) -> dict[str, PeerView]:
    """Build initial views from tree placements (one BFS gather per clone)."""
    kernel = index_from_profiles(profiles)
    rng = random.Random(f"{params.rng_seed}:init")
    views: dict[str, PeerView] = {}
    for uid in sorted(profiles):
        view = PeerView(uid, params.closest_list_size)
        gathered: set[str] = set()
        for leaf_id in tree.user_placements.get(uid, []):
            refs = tree.bfs_collect(
                leaf_id, params.contacts_per_clone, exclude_user=uid, rng=rng
            )
            gathered.update(ref.user_id for ref in refs)
        if gathered:
            ordered = sorted(gathered)
            sims = kernel.sims(profiles[uid].user_embedding, ordered)
            for other, sim in zip(ordered, sims):
                view.add_known(other, float(sim))
        view.recompute_closest()
        views[uid] = view
    return views


def random_views(
    profiles: Mapping[str, UserProfile],
    budget: Mapping[str, int],
    closest_list_size: int,
    rng_seed: int,
) -> dict[str, PeerView]:
    """Baseline views: per user, `budget[user]` uniformly random peers."""
    kernel = index_from_profiles(profiles)
    ids = sorted(profiles)
    views: dict[str, PeerView] = {}
    for uid in ids:
        rng = random.Random(f"{rng_seed}:randview:{uid}")
        others = [u for u in ids if u != uid]
        take = min(budget.get(uid, 0), len(others))
        sample = rng.sample(others, take)
        view = PeerView(uid, closest_list_size)
        if sample:
            ordered = sorted(sample)
            sims = kernel.sims(profiles[uid].user_embedding, ordered)
            for other, sim in zip(ordered, sims):
                view.add_known(other, float(sim))
        view.recompute_closest()
        views[uid] = view
    return views


def expansion_round(
    views: dict[str, PeerView],
    profiles: Mapping[str, UserProfile],
    rng_seed: int,
    round_index: int,
    kernel: UnitIndex | None = None,
) -> int:
    """One gossip round; mutates views in place, returns accepted introductions.

    Every user, in a shuffled order, queries one random peer from its
    closest-users list; the peer answers with the known user most similar to
    the asker that the asker does not already know. The candidate is adopted
    only if the closest list is under-full or it strictly beats the current
    last entry. Updates apply sequentially, so later users in the round see
    earlier users' updates.
    """
    if kernel is None:
        kernel = index_from_profiles(profiles)
    rng = random.Random(f"{rng_seed}:round{round_index}")
    order = sorted(views)
    rng.shuffle(order)
    accepted = 0
    for uid in order:
        view = views[uid]
        if not view.closest_users:
            continue  # isolated node
        peer = views[rng.choice(view.closest_users)]
        candidates = peer.known_users - view.known_users - {uid}
        if not candidates:
            continue
        ordered = sorted(candidates)  # ties resolve to the smallest user id
        sims = kernel.sims(profiles[uid].user_embedding, ordered)
        best_pos = int(sims.argmax())
        best, best_sim = ordered[best_pos], float(sims[best_pos])
        if len(view.closest_users) < view.closest_cap or best_sim > view.worst_closest_sim():
            view.add_known(best, best_sim)
            view.recompute_closest()
            accepted += 1
    return accepted


@dataclass(frozen=True)
class RoundMetrics:
    round: int
    mean_recall: float | None
    mean_known_users: float
    accepted_introductions: int


def _metrics(
    views: dict[str, PeerView], round_index: int, accepted: int, truth: GroundTruth | None
) -> RoundMetrics:
    n = len(views) or 1
    mean_known = sum(len(v.known_users) for v in views.values()) / n
    mean_recall = None
    if truth is not None:
        mean_recall = sum(recall_of_50(v, truth) for v in views.values()) / n
    return RoundMetrics(round_index, mean_recall, mean_known, accepted)


def run_expansion(
    views: dict[str, PeerView],
    profiles: Mapping[str, UserProfile],
    params: ExpansionParams,
    truth: GroundTruth | None = None,
) -> list[RoundMetrics]:
    """Run `params.rounds` sequential rounds; returns the per-round trace.

    Row 0 describes the initial views. When a ground truth is supplied the
    trace carries mean recall per round.
    """
    kernel = index_from_profiles(profiles)
    trace = [_metrics(views, 0, 0, truth)]
    for r in range(1, params.rounds + 1):
        accepted = expansion_round(views, profiles, params.rng_seed, r, kernel)
        trace.append(_metrics(views, r, accepted, truth))
    return trace


def write_round_metrics(path, trace: list[RoundMetrics]) -> None:
    """CSV rows: round, mean_recall, mean_known_users, accepted_introductions."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("round,mean_recall,mean_known_users,accepted_introductions\n")
        for m in trace:
            recall = "" if m.mean_recall is None else repr(m.mean_recall)
            fh.write(f"{m.round},{recall},{m.mean_known_users!r},{m.accepted_introductions}\n")


def save_views(path, views: Mapping[str, PeerView]) -> None:
    payload = {
        "closest_cap": next(iter(views.values())).closest_cap if views else 0,
        "views": {
            uid: {"known": sorted(v.known_users), "closest": v.closest_users}
            for uid, v in sorted(views.items())
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True)


def load_views(path, profiles: Mapping[str, UserProfile]) -> dict[str, PeerView]:
    """Rebuild views from disk; similarity scores are recomputed from profiles."""
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    kernel = index_from_profiles(profiles)
    views: dict[str, PeerView] = {}
    for uid, rec in payload["views"].items():
        view = PeerView(uid, payload["closest_cap"])
        known = rec["known"]
        if known:
            sims = kernel.sims(profiles[uid].user_embedding, known)
            for other, sim in zip(known, sims):
                view.add_known(other, float(sim))
        view.recompute_closest()
        views[uid] = view
    return views
