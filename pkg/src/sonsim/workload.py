"""Workload ingestion and synthesis.

Real mode: parse an access-log TSV (user_id, query_text, timestamp, doc_id,
title) plus a document-embedding file, dedupe to first access, filter thin
users, and split train/test. Synthetic mode: clustered documents on the unit
sphere with a shared per-cluster pool so document co-occurrence exists by
construction. Everything randomized takes an explicit 64-bit seed.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .embedding import (
    DegenerateEmbeddingError,
    Embedding,
    UnitIndex,
    as_embedding,
    mean_embedding,
)


class IngestionError(ValueError):
    """Malformed input file; message carries the offending line number."""


@dataclass(eq=False)
class DocumentRecord:
    doc_id: str
    title: str
    embedding: Embedding


@dataclass(frozen=True)
class AccessEvent:
    user_id: str
    doc_id: str
    timestamp: object  # any totally ordered value within one dataset
    query_text: str | None = None


@dataclass(eq=False)
class UserProfile:
    user_id: str
    train_docs: frozenset[str]
    test_docs: frozenset[str]
    user_embedding: Embedding

    @property
    def all_docs(self) -> frozenset[str]:
        return self.train_docs | self.test_docs


def dedupe_first_access(events: Sequence[AccessEvent]) -> list[AccessEvent]:
    """Keep, per (user, doc) pair, only the earliest-timestamp event.

    Ties on timestamp keep the first occurrence. Relative input order of the
    surviving events is preserved.
    """
    best: dict[tuple[str, str], int] = {}
    for i, ev in enumerate(events):
        key = (ev.user_id, ev.doc_id)
        if key not in best or ev.timestamp < events[best[key]].timestamp:
            best[key] = i
    keep = set(best.values())
    return [ev for i, ev in enumerate(events) if i in keep]


def group_user_docs(events: Sequence[AccessEvent]) -> dict[str, list[str]]:
    """Unique docs per user, in event order (events should be deduped first)."""
    out: dict[str, list[str]] = {}
    seen: set[tuple[str, str]] = set()
    for ev in events:
        key = (ev.user_id, ev.doc_id)
        if key in seen:
            continue
        seen.add(key)
        out.setdefault(ev.user_id, []).append(ev.doc_id)
    return out


def filter_min_docs(
    user_docs: Mapping[str, Sequence[str]], min_docs: int = 30
) -> dict[str, list[str]]:
    """Drop users holding fewer than `min_docs` unique documents."""
    return {u: list(docs) for u, docs in user_docs.items() if len(docs) >= min_docs}


def split_train_test(
    user_id: str,
    doc_ids: Sequence[str],
    doc_embeddings: Mapping[str, Embedding],
    test_size: int = 10,
    rng_seed: int = 0,
) -> UserProfile:
    """Sample `test_size` docs (without replacement) into the test set.

    The user embedding is the mean over *train* documents only, so test
    documents never leak into routing.
    """
    docs = list(doc_ids)
    if len(docs) <= test_size:
        raise ValueError(
            f"user {user_id!r} has {len(docs)} docs; needs more than test_size={test_size}"
        )
    rng = random.Random(rng_seed)
    test = set(rng.sample(docs, test_size)) if test_size > 0 else set()
    train = [d for d in docs if d not in test]
    # sorted order makes the mean bit-for-bit reproducible from the frozenset
    emb = mean_embedding([doc_embeddings[d] for d in sorted(train)])
    return UserProfile(
        user_id=user_id,
        train_docs=frozenset(train),
        test_docs=frozenset(test),
        user_embedding=emb,
    )


def build_profiles(
    events: Sequence[AccessEvent],
    doc_embeddings: Mapping[str, Embedding],
    min_docs: int = 30,
    test_size: int = 10,
    rng_seed: int = 0,
) -> dict[str, UserProfile]:
    """Full ingestion pipeline: dedupe, group, filter, split."""
    deduped = dedupe_first_access(events)
    user_docs = filter_min_docs(group_user_docs(deduped), min_docs)
    master = random.Random(rng_seed)
    profiles: dict[str, UserProfile] = {}
    for uid in sorted(user_docs):
        profiles[uid] = split_train_test(
            uid, user_docs[uid], doc_embeddings, test_size=test_size, rng_seed=master.getrandbits(63)
        )
    return profiles


# --- embedding / dataset file formats -------------------------------------

def load_embedding_file(path: str | Path) -> dict[str, Embedding]:
    """Parse the embedding text format: header `dim=<D>`, then
    `<id>\\t<f1> <f2> ... <fD>` per line.

    Raises IngestionError (with line number) on malformed header or rows,
    dimension mismatches, duplicate ids, or degenerate vectors.
    """
    out: dict[str, Embedding] = {}
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline()
        if header == "":
            return out  # empty file -> empty map
        header = header.strip()
        if not header.startswith("dim="):
            raise IngestionError(f"{path}:1: expected header 'dim=<D>', got {header!r}")
        try:
            dim = int(header[4:])
        except ValueError:
            raise IngestionError(f"{path}:1: bad dimension {header!r}") from None
        if dim <= 0:
            raise IngestionError(f"{path}:1: dimension must be positive, got {dim}")
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise IngestionError(f"{path}:{lineno}: expected '<id>\\t<floats>'")
            doc_id, floats = parts
            if doc_id in out:
                raise IngestionError(f"{path}:{lineno}: duplicate id {doc_id!r}")
            fields = floats.split()
            if len(fields) != dim:
                raise IngestionError(
                    f"{path}:{lineno}: expected {dim} floats, got {len(fields)}"
                )
            try:
                values = [float(x) for x in fields]
            except ValueError:
                raise IngestionError(f"{path}:{lineno}: non-numeric component") from None
            try:
                out[doc_id] = as_embedding(values, dim=dim)
            except DegenerateEmbeddingError as exc:
                raise IngestionError(f"{path}:{lineno}: {exc}") from None
    return out


def write_embedding_file(path: str | Path, vectors: Mapping[str, Embedding]) -> None:
    """Write the embedding text format with full float64 round-trip precision."""
    items = list(vectors.items())
    if not items:
        Path(path).write_text("", encoding="utf-8")
        return
    dim = len(items[0][1])
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"dim={dim}\n")
        for doc_id, vec in items:
            if len(vec) != dim:
                raise ValueError(f"inconsistent dim for {doc_id!r}")
            fh.write(doc_id + "\t" + " ".join(repr(float(x)) for x in vec) + "\n")


def load_access_log(path: str | Path) -> tuple[list[AccessEvent], dict[str, str]]:
    """Parse the access-log TSV: user_id, query_text, timestamp, doc_id, title.

    Extra columns are tolerated and ignored. Returns the events plus a
    doc_id -> title map (first title seen wins). Timestamps stay raw strings;
    they only need to be totally ordered within one dataset.
    """
    events: list[AccessEvent] = []
    titles: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) < 5:
                raise IngestionError(f"{path}:{lineno}: expected >= 5 tab-separated columns")
            user_id, query_text, timestamp, doc_id, title = parts[:5]
            events.append(AccessEvent(user_id, doc_id, timestamp, query_text or None))
            titles.setdefault(doc_id, title)
    return events, titles


# --- profile persistence (CLI pipeline glue) -------------------------------

def save_profiles(path: str | Path, profiles: Mapping[str, UserProfile]) -> None:
    payload = {
        "dim": len(next(iter(profiles.values())).user_embedding) if profiles else 0,
        "users": {
            uid: {
                "train": sorted(p.train_docs),
                "test": sorted(p.test_docs),
                "embedding": [float(x) for x in p.user_embedding],
            }
            for uid, p in sorted(profiles.items())
        },
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")


def load_profiles(path: str | Path) -> dict[str, UserProfile]:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    dim = payload["dim"] or None
    return {
        uid: UserProfile(
            user_id=uid,
            train_docs=frozenset(rec["train"]),
            test_docs=frozenset(rec["test"]),
            user_embedding=as_embedding(rec["embedding"], dim=dim),
        )
        for uid, rec in payload["users"].items()
    }


def index_from_profiles(profiles: Mapping[str, UserProfile]) -> UnitIndex:
    """Unit-normalized similarity index over user embeddings, id-sorted."""
    ids = sorted(profiles)
    return UnitIndex(ids, [profiles[u].user_embedding for u in ids])


# --- synthetic workloads ---------------------------------------------------

def synthesize_workload(
    n_users: int,
    n_clusters: int,
    docs_per_user: int,
    dim: int,
    noise_scale: float,
    co_occurrence_rate: float,
    rng_seed: int,
    test_size: int = 10,
) -> tuple[dict[str, UserProfile], dict[str, DocumentRecord]]:
    """Clustered desk-scale workload with co-occurrence by construction.

    Cluster centers are Gaussian draws normalized onto the unit sphere; each
    cluster owns a pool of `docs_per_user` shared documents. User i belongs
    to cluster i mod n_clusters (the cluster is recoverable from the shared
    doc-id prefix) and samples round(co_occurrence_rate * docs_per_user) pool
    docs, topping up with private docs near the same center. All document
    embeddings are unit-normalized so cosine and Euclidean orderings nearly
    coincide, as with real encoder outputs.
    """
    if min(n_users, n_clusters, docs_per_user, dim) <= 0:
        raise ValueError("all counts must be positive")
    if not 0.0 <= co_occurrence_rate <= 1.0:
        raise ValueError("co_occurrence_rate must be in [0, 1]")
    if test_size >= docs_per_user:
        raise ValueError("docs_per_user must exceed test_size")

    rng = np.random.default_rng(rng_seed)

    def _noisy_doc(center: np.ndarray) -> np.ndarray:
        v = center + noise_scale * rng.standard_normal(dim)
        norm = np.linalg.norm(v)
        if norm == 0.0:  # vanishingly unlikely; resample deterministically
            v = center + (noise_scale or 1.0) * rng.standard_normal(dim)
            norm = np.linalg.norm(v)
        return v / norm

    centers = rng.standard_normal((n_clusters, dim))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)

    corpus: dict[str, DocumentRecord] = {}
    pools: list[list[str]] = []
    for c in range(n_clusters):
        pool_ids = []
        for j in range(docs_per_user):
            doc_id = f"c{c:03d}_pool{j:04d}"
            corpus[doc_id] = DocumentRecord(doc_id, f"shared {c}/{j}", _noisy_doc(centers[c]))
            pool_ids.append(doc_id)
        pools.append(pool_ids)

    n_shared = int(round(co_occurrence_rate * docs_per_user))
    split_master = random.Random(rng_seed)
    profiles: dict[str, UserProfile] = {}
    for i in range(n_users):
        uid = f"u{i:05d}"
        c = i % n_clusters
        shared = [pools[c][k] for k in rng.choice(docs_per_user, size=n_shared, replace=False)]
        docs = list(shared)
        for j in range(docs_per_user - n_shared):
            doc_id = f"{uid}_doc{j:04d}"
            corpus[doc_id] = DocumentRecord(doc_id, f"private {uid}/{j}", _noisy_doc(centers[c]))
            docs.append(doc_id)
        doc_embeddings = {d: corpus[d].embedding for d in docs}
        profiles[uid] = split_train_test(
            uid, docs, doc_embeddings, test_size=test_size, rng_seed=split_master.getrandbits(63)
        )
    return profiles, corpus


def synthesize_adversarial_workload(
    n_users: int, dim: int, rng_seed: int
) -> tuple[dict[str, UserProfile], dict[str, DocumentRecord]]:
    """Worst-case workload: geometrically spaced points along one axis.

    Every prefix of the sequence has one point far beyond the rest, so leaf
    splits keep peeling off near-singleton clusters and the tree degenerates
    toward a chain regardless of insertion order. Embeddings are deliberately
    not normalized. One document per user; empty test sets.
    """
    if n_users > 1000:
        raise ValueError("geometric positions overflow float64 beyond ~1000 users")
    profiles: dict[str, UserProfile] = {}
    corpus: dict[str, DocumentRecord] = {}
    for i in range(n_users):
        uid = f"adv{i:04d}"
        vec = np.zeros(dim, dtype=np.float64)
        vec[0] = 2.0 ** i
        doc_id = f"{uid}_doc"
        corpus[doc_id] = DocumentRecord(doc_id, f"outlier {i}", vec)
        profiles[uid] = UserProfile(
            user_id=uid,
            train_docs=frozenset([doc_id]),
            test_docs=frozenset(),
            user_embedding=vec,
        )
    return profiles, corpus


# --- co-occurrence characterization ----------------------------------------

@dataclass(frozen=True)
class CooccurrenceStat:
    user_id: str
    max_shared_docs: int
    max_cosine: float


def cooccurrence_stats(profiles: Mapping[str, UserProfile]) -> dict[str, CooccurrenceStat]:
    """Per user: max over other users of shared-document count and of cosine
    similarity between user embeddings. Document identity is exact doc_id
    string equality. Single-user workloads report (0, -1.0)."""
    ids = sorted(profiles)
    doc_sets = {u: profiles[u].all_docs for u in ids}
    index = index_from_profiles(profiles)
    n = len(ids)
    max_cos = np.full(n, -1.0)
    block = 1024  # keep the pairwise scan out of O(N^2) memory
    for start in range(0, n, block):
        stop = min(start + block, n)
        sims = index.matrix[start:stop] @ index.matrix.T
        for r in range(stop - start):
            sims[r, start + r] = -np.inf
        if n > 1:
            max_cos[start:stop] = sims.max(axis=1)

    max_shared = {u: 0 for u in ids}
    holders: dict[str, list[str]] = {}
    for u in ids:
        for d in doc_sets[u]:
            holders.setdefault(d, []).append(u)
    pair_counts: dict[tuple[str, str], int] = {}
    for d, us in holders.items():
        if len(us) < 2:
            continue
        for i in range(len(us)):
            for j in range(i + 1, len(us)):
                pair = (us[i], us[j])
                pair_counts[pair] = pair_counts.get(pair, 0) + 1
    for (a, b), count in pair_counts.items():
        if count > max_shared[a]:
            max_shared[a] = count
        if count > max_shared[b]:
            max_shared[b] = count

    return {
        u: CooccurrenceStat(u, max_shared[u], float(max_cos[i]))
        for i, u in enumerate(ids)
    }
