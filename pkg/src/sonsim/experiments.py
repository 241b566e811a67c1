"""End-to-end experiment harness.

Three experiments (closest-user recall vs expansion rounds, document
retrieval rate vs hop budget across engines, min-hop distance histograms)
plus an empirical scaling check. Every run is driven by a serializable
config; a config plus the code version determines every CSV byte. One CSV
per figure-equivalent, plus a run.json manifest with the config echo and
timings.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Mapping

import numpy as np

from . import __version__
from .embedding import Embedding
from .expansion import (
    ExpansionParams,
    init_views,
    random_views,
    run_expansion,
)
from .graphs import barabasi_albert, complete_graph, graph_from_views, hop_histogram
from .oracle import compute_ground_truth
from .query import QueryTask, chain_hop, diffuse_embeddings, diffusion_query, random_walk_query
from .tree import TreeParams, build_tree, tree_stats
from .workload import (
    DocumentRecord,
    UserProfile,
    build_profiles,
    index_from_profiles,
    load_access_log,
    load_embedding_file,
    synthesize_adversarial_workload,
    synthesize_workload,
)


@dataclass(frozen=True)
class SyntheticSpec:
    n_users: int = 2000
    n_clusters: int = 10
    docs_per_user: int = 40
    dim: int = 64
    noise_scale: float = 0.2
    co_occurrence_rate: float = 0.3
    test_size: int = 10


@dataclass(frozen=True)
class DatasetSpec:
    dataset_path: str
    embeddings_path: str
    query_embeddings_path: str | None = None
    min_docs: int = 30
    test_size: int = 10


@dataclass(frozen=True)
class ExperimentConfig:
    workload: SyntheticSpec | DatasetSpec = field(default_factory=SyntheticSpec)
    leaf_capacity: int = 50
    delta: float = 1e-3  # clone threshold for single-tree experiments
    delta_grid: tuple[float, ...] = (0.0, 1e-6, 1e-5, 1e-4, 1e-3, 5e-3)
    contacts_per_clone: int = 50
    closest_list_size: int = 50
    rounds: int = 20
    max_hops: int = 10
    neighbor_source: str = "known_users"
    ba_m: int | None = None  # None -> degree-matched: round(mean_out_degree / 2)
    alphas: tuple[float, ...] = (1.0, 0.9, 0.5, 0.1)
    truth_k: int = 50
    seeds: tuple[int, ...] = (11, 22, 33, 44, 55)

    def to_json(self) -> str:
        payload = asdict(self)
        payload["workload_kind"] = (
            "synthetic" if isinstance(self.workload, SyntheticSpec) else "dataset"
        )
        return json.dumps(payload, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        payload = json.loads(text)
        kind = payload.pop("workload_kind")
        workload = payload.pop("workload")
        spec = SyntheticSpec(**workload) if kind == "synthetic" else DatasetSpec(**workload)
        payload["delta_grid"] = tuple(payload["delta_grid"])
        payload["alphas"] = tuple(payload["alphas"])
        payload["seeds"] = tuple(payload["seeds"])
        return cls(workload=spec, **payload)


def experiment2_preset() -> ExperimentConfig:
    return ExperimentConfig(delta=3e-3, rounds=10)


def experiment3_preset() -> ExperimentConfig:
    return ExperimentConfig(delta=1e-3, rounds=10)


def load_workload(
    config: ExperimentConfig, seed: int
) -> tuple[dict[str, UserProfile], dict[str, DocumentRecord], dict[str, Embedding]]:
    """Materialize (profiles, corpus, query_embeddings) for one seed.

    Dataset workloads reuse the same files across seeds (the split reseeds);
    synthetic workloads regenerate entirely.
    """
    w = config.workload
    if isinstance(w, SyntheticSpec):
        profiles, corpus = synthesize_workload(
            w.n_users,
            w.n_clusters,
            w.docs_per_user,
            w.dim,
            w.noise_scale,
            w.co_occurrence_rate,
            rng_seed=seed,
            test_size=w.test_size,
        )
        return profiles, corpus, {}
    embeddings = load_embedding_file(w.embeddings_path)
    events, titles = load_access_log(w.dataset_path)
    profiles = build_profiles(
        events, embeddings, min_docs=w.min_docs, test_size=w.test_size, rng_seed=seed
    )
    corpus = {
        d: DocumentRecord(d, titles.get(d, d), embeddings[d])
        for p in profiles.values()
        for d in p.all_docs
    }
    queries = {}
    if w.query_embeddings_path:
        queries = load_embedding_file(w.query_embeddings_path)
    return profiles, corpus, queries


def _write_csv(path: Path, header: str, rows: list[str]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(row + "\n")


def _write_manifest(out_dir: Path, config: ExperimentConfig, timings: dict, extras: dict) -> None:
    payload = {
        "config": json.loads(config.to_json()),
        "version": __version__,
        "timings_sec": timings,
        "extras": extras,
    }
    (out_dir / "run.json").write_text(json.dumps(payload, sort_keys=True, indent=2), encoding="utf-8")


# --- experiment 1: closest-user identification ------------------------------

def run_experiment_1(config: ExperimentConfig, out_dir: str | Path) -> Path:
    """Recall vs expansion round per clone threshold, plus the randomized
    known-users baseline at the budget of the best-connected threshold."""
    out_dir = Path(out_dir)
    rows: list[str] = []
    timings: dict[str, float] = {}
    for seed in config.seeds:
        t0 = time.perf_counter()
        profiles, _, _ = load_workload(config, seed)
        truth = compute_ground_truth(profiles, k=config.truth_k)
        exp_params = ExpansionParams(
            contacts_per_clone=config.contacts_per_clone,
            closest_list_size=config.closest_list_size,
            rounds=config.rounds,
            rng_seed=seed,
        )

        init_budgets: dict[float, dict[str, int]] = {}
        for delta in config.delta_grid:
            tree = build_tree(
                profiles, TreeParams(config.leaf_capacity, delta, rng_seed=seed)
            )
            views = init_views(tree, profiles, exp_params)
            init_budgets[delta] = {u: len(v.known_users) for u, v in views.items()}
            trace = run_expansion(views, profiles, exp_params, truth=truth)
            label = f"delta={delta:g}"
            for m in trace:
                rows.append(
                    f"{seed},{label},{m.round},{m.mean_recall!r},"
                    f"{m.mean_known_users!r},{m.accepted_introductions}"
                )

        # baseline keeps the budget of the threshold with the largest mean
        # initial known-users count, but randomizes who is known
        best_delta = max(
            config.delta_grid,
            key=lambda d: sum(init_budgets[d].values()) / max(len(init_budgets[d]), 1),
        )
        views = random_views(
            profiles, init_budgets[best_delta], config.closest_list_size, rng_seed=seed
        )
        trace = run_expansion(views, profiles, exp_params, truth=truth)
        for m in trace:
            rows.append(
                f"{seed},random,{m.round},{m.mean_recall!r},"
                f"{m.mean_known_users!r},{m.accepted_introductions}"
            )
        timings[f"seed_{seed}"] = round(time.perf_counter() - t0, 3)

    csv_path = out_dir / "experiment1_recall.csv"
    _write_csv(
        csv_path,
        "seed,config,round,mean_recall,mean_known_users,accepted_introductions",
        rows,
    )
    _write_manifest(out_dir, config, timings, {"experiment": 1})
    return csv_path


# --- experiment 2: document retrieval across engines -------------------------

def _query_set(
    profiles: Mapping[str, UserProfile],
    corpus: Mapping[str, DocumentRecord],
    query_embeddings: Mapping[str, Embedding],
) -> list[tuple[str, str, Embedding]]:
    """Paired query set: every user issues every test-set document once.

    The query embedding is the recorded query-text embedding for the target
    when available, else the target document's own title embedding.
    """
    out = []
    for uid in sorted(profiles):
        for doc in sorted(profiles[uid].test_docs):
            emb = query_embeddings.get(doc)
            if emb is None:
                emb = corpus[doc].embedding
            out.append((uid, doc, emb))
    return out


def retrieval_ceiling(
    profiles: Mapping[str, UserProfile], queries: list[tuple[str, str, Embedding]]
) -> float:
    """Fraction of queries whose target is held (train-set) by someone else."""
    holders: dict[str, int] = {}
    for p in profiles.values():
        for d in p.train_docs:
            holders[d] = holders.get(d, 0) + 1
    reachable = sum(1 for _, doc, _ in queries if holders.get(doc, 0) > 0)
    return reachable / len(queries) if queries else 0.0


def run_experiment_2(config: ExperimentConfig, out_dir: str | Path) -> Path:
    """Retrieval-rate curves vs hop budget for the tree overlay, a
    degree-matched preferential-attachment graph, the random-peers baseline,
    and embedding diffusion at each teleport probability."""
    out_dir = Path(out_dir)
    summary_rows: list[str] = []
    query_rows: list[str] = []
    timings: dict[str, float] = {}
    extras: dict[str, object] = {}
    for seed in config.seeds:
        t0 = time.perf_counter()
        profiles, corpus, query_embeddings = load_workload(config, seed)
        users = sorted(profiles)
        kernel = index_from_profiles(profiles)
        tree = build_tree(profiles, TreeParams(config.leaf_capacity, config.delta, rng_seed=seed))
        exp_params = ExpansionParams(
            config.contacts_per_clone, config.closest_list_size, config.rounds, seed
        )
        views = init_views(tree, profiles, exp_params)
        run_expansion(views, profiles, exp_params)

        tree_graph = graph_from_views(views, config.neighbor_source)
        m = config.ba_m or max(1, round(tree_graph.mean_out_degree / 2))
        m = min(m, len(users) - 1)
        ba_graph = barabasi_albert(len(users), m, rng_seed=seed, labels=users)
        full_graph = complete_graph(users)
        states = {a: diffuse_embeddings(ba_graph, profiles, a) for a in config.alphas}
        extras[f"seed_{seed}"] = {
            "tree_graph_mean_out_degree": tree_graph.mean_out_degree,
            "ba_m": m,
            "neighbor_source": config.neighbor_source,
        }

        queries = _query_set(profiles, corpus, query_embeddings)
        extras[f"seed_{seed}"]["retrieval_ceiling"] = retrieval_ceiling(profiles, queries)

        engines: list[tuple[str, object]] = [
            ("tree-chain", lambda t: chain_hop(t, tree_graph, profiles, kernel=kernel)),
            ("ba-chain", lambda t: chain_hop(t, ba_graph, profiles, kernel=kernel)),
            (
                "random-peers",
                lambda t: random_walk_query(
                    t, full_graph, profiles, f"{seed}:{t.origin_user}:{t.target_doc}"
                ),
            ),
        ]
        for alpha in config.alphas:
            engines.append(
                (
                    f"diffusion-a{alpha:g}",
                    lambda t, _s=states[alpha]: diffusion_query(t, ba_graph, _s, profiles),
                )
            )

        for name, runner in engines:
            found_at: list[int | None] = []
            for uid, doc, emb in queries:
                outcome = runner(QueryTask(uid, emb, doc, config.max_hops))
                found_at.append(outcome.hops_used if outcome.found else None)
                query_rows.append(
                    f"{seed},{name},{uid},{doc},{int(outcome.found)},"
                    f"{outcome.hops_used},{outcome.messages_sent}"
                )
            for budget in range(config.max_hops + 1):
                hits = sum(1 for h in found_at if h is not None and h <= budget)
                rate = hits / len(queries) if queries else 0.0
                summary_rows.append(f"{seed},{name},{budget},{rate!r}")
        timings[f"seed_{seed}"] = round(time.perf_counter() - t0, 3)

    csv_path = out_dir / "experiment2_retrieval.csv"
    _write_csv(csv_path, "seed,engine,budget,retrieval_rate", summary_rows)
    _write_csv(
        out_dir / "experiment2_queries.csv",
        "seed,engine,origin,target_doc,found,hops_used,messages",
        query_rows,
    )
    _write_manifest(out_dir, config, timings, {"experiment": 2, **extras})
    return csv_path


# --- experiment 3: minimum hop distance --------------------------------------

def run_experiment_3(config: ExperimentConfig, out_dir: str | Path) -> Path:
    """Min-hop histograms: tree-overlay graph vs degree-matched BA graph."""
    out_dir = Path(out_dir)
    rows: list[str] = []
    timings: dict[str, float] = {}
    extras: dict[str, object] = {}
    for seed in config.seeds:
        t0 = time.perf_counter()
        profiles, _, _ = load_workload(config, seed)
        users = sorted(profiles)
        tree = build_tree(profiles, TreeParams(config.leaf_capacity, config.delta, rng_seed=seed))
        exp_params = ExpansionParams(
            config.contacts_per_clone, config.closest_list_size, config.rounds, seed
        )
        views = init_views(tree, profiles, exp_params)
        run_expansion(views, profiles, exp_params)
        tree_graph = graph_from_views(views, config.neighbor_source)
        m = config.ba_m or max(1, round(tree_graph.mean_out_degree / 2))
        m = min(m, len(users) - 1)
        ba_graph = barabasi_albert(len(users), m, rng_seed=seed, labels=users)
        extras[f"seed_{seed}"] = {"ba_m": m, "tree_mean_out_degree": tree_graph.mean_out_degree}

        samples = [
            (uid, doc) for uid in users for doc in sorted(profiles[uid].test_docs)
        ]
        for label, graph in (("tree", tree_graph), ("ba", ba_graph)):
            hist = hop_histogram(graph, profiles, samples)
            for distance in sorted(hist.counts):
                rows.append(f"{seed},{label},{distance},{hist.counts[distance]}")
            rows.append(f"{seed},{label},unreachable,{hist.unreachable}")
        timings[f"seed_{seed}"] = round(time.perf_counter() - t0, 3)

    csv_path = out_dir / "experiment3_minhop.csv"
    _write_csv(csv_path, "seed,graph,distance,count", rows)
    _write_manifest(out_dir, config, timings, {"experiment": 3, **extras})
    return csv_path


# --- scaling check ------------------------------------------------------------

def run_scaling_check(
    config: ExperimentConfig,
    out_dir: str | Path,
    n_sweep: tuple[int, ...] = (250, 500, 1000, 2000, 4000),
    adversarial_users: int = 240,
    adversarial_capacity: int = 10,
) -> Path:
    """Empirical complexity check over a user-count sweep.

    Reports per-N tree height, total insertion comparisons, and expansion
    messages per round; fits comparisons/N against log N; and builds the
    adversarial geometric workload to document the degenerate-height case.
    """
    if not isinstance(config.workload, SyntheticSpec):
        raise ValueError("scaling check runs on synthetic workloads")
    out_dir = Path(out_dir)
    seed = config.seeds[0]
    rows: list[str] = []
    comp_per_user: list[float] = []
    timings: dict[str, float] = {}
    for n in n_sweep:
        t0 = time.perf_counter()
        spec = replace(config.workload, n_users=n)
        profiles, _ = synthesize_workload(
            spec.n_users,
            spec.n_clusters,
            spec.docs_per_user,
            spec.dim,
            spec.noise_scale,
            spec.co_occurrence_rate,
            rng_seed=seed,
            test_size=spec.test_size,
        )
        tree = build_tree(profiles, TreeParams(config.leaf_capacity, config.delta, rng_seed=seed))
        exp_params = ExpansionParams(
            config.contacts_per_clone, config.closest_list_size, rounds=0, rng_seed=seed
        )
        views = init_views(tree, profiles, exp_params)
        # one query per engaged user per round; isolated users stay silent
        isolated = sum(1 for v in views.values() if not v.closest_users)
        messages = n - isolated
        per_user = tree.comparisons / n
        comp_per_user.append(per_user)
        rows.append(
            f"{n},{tree.height()},{tree.comparisons},{per_user!r},{messages},{isolated}"
        )
        timings[f"n_{n}"] = round(time.perf_counter() - t0, 3)

    # least squares of comparisons/N against log N
    logs = np.log(np.asarray(n_sweep, dtype=np.float64))
    ys = np.asarray(comp_per_user)
    slope, intercept = (float(x) for x in np.polyfit(logs, ys, 1))
    pred = slope * logs + intercept
    ss_res = float(((ys - pred) ** 2).sum())
    ss_tot = float(((ys - ys.mean()) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0

    adv_profiles, _ = synthesize_adversarial_workload(
        adversarial_users, config.workload.dim, rng_seed=seed
    )
    adv_tree = build_tree(
        adv_profiles, TreeParams(adversarial_capacity, 0.0, rng_seed=seed)
    )
    adv_bound = float(2 * np.log2(adversarial_users / adversarial_capacity) + 2)

    csv_path = out_dir / "scaling.csv"
    _write_csv(
        csv_path,
        "n,tree_height,insertion_comparisons,comparisons_per_user,"
        "expansion_messages_per_round,isolated_users",
        rows,
    )
    _write_manifest(
        out_dir,
        config,
        timings,
        {
            "experiment": "scaling",
            "fit_slope": slope,
            "fit_intercept": intercept,
            "fit_r2": r2,
            "comparisons_per_user": dict(zip(map(str, n_sweep), comp_per_user)),
            "adversarial_users": adversarial_users,
            "adversarial_capacity": adversarial_capacity,
            "adversarial_height": adv_tree.height(),
            "balanced_height_bound": adv_bound,
            "adversarial_leaf_count": tree_stats(adv_tree).leaf_count,
        },
    )
    return csv_path
