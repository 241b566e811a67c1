"""Command-line entry point.

Pipeline subcommands (ingest, synth, build-tree, expand, oracle, query)
compose through files; experiment subcommands (exp1, exp2, exp3, scaling)
run end-to-end from flags and write one CSV per figure plus a run.json
manifest. --seed and --out are mandatory for experiment subcommands.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .expansion import (
    ExpansionParams,
    init_views,
    load_views,
    run_expansion,
    save_views,
    write_round_metrics,
)
from .experiments import (
    DatasetSpec,
    ExperimentConfig,
    SyntheticSpec,
    run_experiment_1,
    run_experiment_2,
    run_experiment_3,
    run_scaling_check,
)
from .graphs import graph_from_views, write_edge_list
from .oracle import compute_ground_truth
from .query import QueryTask, chain_hop, diffuse_embeddings, diffusion_query, random_walk_query
from .tree import Tree, TreeParams, build_tree, tree_stats
from .workload import (
    build_profiles,
    load_access_log,
    load_embedding_file,
    load_profiles,
    save_profiles,
    synthesize_workload,
    write_embedding_file,
)


def _add_tree_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--leaf-capacity", type=int, default=50)
    p.add_argument("--clone-threshold", type=float, default=1e-3)


def _add_expansion_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--contacts-per-clone", type=int, default=50)
    p.add_argument("--closest-list-size", type=int, default=50)
    p.add_argument("--rounds", type=int, default=20)


def _add_synth_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n-users", type=int, default=2000)
    p.add_argument("--n-clusters", type=int, default=10)
    p.add_argument("--docs-per-user", type=int, default=40)
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--noise-scale", type=float, default=0.2)
    p.add_argument("--co-occurrence-rate", type=float, default=0.3)
    p.add_argument("--test-size", type=int, default=10)


def _add_dataset_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dataset", help="access-log TSV (user, query, timestamp, doc, title)")
    p.add_argument("--embeddings", help="document embedding file")
    p.add_argument("--query-embeddings", help="optional query embedding file keyed by doc id")
    p.add_argument("--min-docs", type=int, default=30)


def _experiment_parser(sub, name: str, help_text: str) -> argparse.ArgumentParser:
    p = sub.add_parser(name, help=help_text)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seeds", help="comma-separated seed list overriding --seed")
    p.add_argument("--config", help="JSON config file; flags below override nothing if given")
    _add_synth_flags(p)
    _add_dataset_flags(p)
    _add_tree_flags(p)
    _add_expansion_flags(p)
    p.add_argument("--max-hops", type=int, default=10)
    p.add_argument("--neighbor-source", choices=["known_users", "closest_users"], default="known_users")
    p.add_argument("--ba-m", type=int, default=None)
    p.add_argument("--alphas", default="1.0,0.9,0.5,0.1")
    return p


def _config_from_args(args) -> ExperimentConfig:
    if args.config:
        return ExperimentConfig.from_json(Path(args.config).read_text(encoding="utf-8"))
    if args.dataset:
        if not args.embeddings:
            raise SystemExit("--dataset requires --embeddings")
        workload = DatasetSpec(
            dataset_path=args.dataset,
            embeddings_path=args.embeddings,
            query_embeddings_path=args.query_embeddings,
            min_docs=args.min_docs,
            test_size=args.test_size,
        )
    else:
        workload = SyntheticSpec(
            n_users=args.n_users,
            n_clusters=args.n_clusters,
            docs_per_user=args.docs_per_user,
            dim=args.dim,
            noise_scale=args.noise_scale,
            co_occurrence_rate=args.co_occurrence_rate,
            test_size=args.test_size,
        )
    seeds = tuple(int(s) for s in args.seeds.split(",")) if args.seeds else (args.seed,)
    return ExperimentConfig(
        workload=workload,
        leaf_capacity=args.leaf_capacity,
        delta=args.clone_threshold,
        contacts_per_clone=args.contacts_per_clone,
        closest_list_size=args.closest_list_size,
        rounds=args.rounds,
        max_hops=args.max_hops,
        neighbor_source=args.neighbor_source,
        ba_m=args.ba_m,
        alphas=tuple(float(a) for a in args.alphas.split(",")),
        seeds=seeds,
    )


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="sonsim", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic workload")
    _add_synth_flags(p)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("ingest", help="ingest an access log plus embeddings")
    _add_dataset_flags(p)
    p.add_argument("--test-size", type=int, default=10)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("build-tree", help="build the clustered tree from profiles")
    p.add_argument("--profiles", required=True)
    _add_tree_flags(p)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("expand", help="initialize and refine peer views")
    p.add_argument("--profiles", required=True)
    p.add_argument("--tree", required=True)
    _add_expansion_flags(p)
    p.add_argument("--truth", help="optional cached ground-truth dir for recall tracking")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("oracle", help="compute exhaustive top-k ground truth")
    p.add_argument("--profiles", required=True)
    p.add_argument("--k", type=int, default=50)
    p.add_argument("--out", required=True)

    p = sub.add_parser("query", help="run every test-set query through one engine")
    p.add_argument("--profiles", required=True)
    p.add_argument("--corpus", required=True, help="document embedding file")
    p.add_argument("--views", required=True)
    p.add_argument("--engine", choices=["chain", "random", "diffusion"], default="chain")
    p.add_argument("--neighbor-source", choices=["known_users", "closest_users"], default="known_users")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--max-hops", type=int, default=10)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)

    for name, help_text in [
        ("exp1", "closest-user recall vs expansion rounds"),
        ("exp2", "retrieval rate vs hop budget across engines"),
        ("exp3", "min-hop histograms vs degree-matched BA"),
        ("scaling", "empirical complexity sweep"),
    ]:
        _experiment_parser(sub, name, help_text)

    args = parser.parse_args(argv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    if args.command == "synth":
        profiles, corpus = synthesize_workload(
            args.n_users,
            args.n_clusters,
            args.docs_per_user,
            args.dim,
            args.noise_scale,
            args.co_occurrence_rate,
            rng_seed=args.seed,
            test_size=args.test_size,
        )
        save_profiles(out / "profiles.json", profiles)
        write_embedding_file(out / "corpus.txt", {d: r.embedding for d, r in sorted(corpus.items())})
        print(f"wrote {len(profiles)} profiles, {len(corpus)} documents to {out}")

    elif args.command == "ingest":
        if not args.dataset or not args.embeddings:
            raise SystemExit("ingest requires --dataset and --embeddings")
        embeddings = load_embedding_file(args.embeddings)
        events, _titles = load_access_log(args.dataset)
        profiles = build_profiles(
            events, embeddings, min_docs=args.min_docs, test_size=args.test_size, rng_seed=args.seed
        )
        save_profiles(out / "profiles.json", profiles)
        kept_docs = {d for p in profiles.values() for d in p.all_docs}
        write_embedding_file(
            out / "corpus.txt", {d: embeddings[d] for d in sorted(kept_docs)}
        )
        print(f"ingested {len(events)} events -> {len(profiles)} profiles at {out}")

    elif args.command == "build-tree":
        profiles = load_profiles(args.profiles)
        tree = build_tree(
            profiles, TreeParams(args.leaf_capacity, args.clone_threshold, rng_seed=args.seed)
        )
        (out / "tree.json").write_text(tree.to_json(), encoding="utf-8")
        stats = tree_stats(tree)
        (out / "tree_stats.json").write_text(
            json.dumps(
                {
                    "height": stats.height,
                    "leaf_count": stats.leaf_count,
                    "users_per_leaf_hist": {str(k): v for k, v in sorted(stats.users_per_leaf_hist.items())},
                    "clones_mean": stats.clones_mean,
                    "clones_median": stats.clones_median,
                    "clones_std": stats.clones_std,
                },
                sort_keys=True,
                indent=2,
            ),
            encoding="utf-8",
        )
        print(f"tree: height={stats.height} leaves={stats.leaf_count} clones_mean={stats.clones_mean:.4f}")

    elif args.command == "expand":
        profiles = load_profiles(args.profiles)
        tree = Tree.from_json(Path(args.tree).read_text(encoding="utf-8"))
        params = ExpansionParams(
            args.contacts_per_clone, args.closest_list_size, args.rounds, args.seed
        )
        truth = compute_ground_truth(profiles, cache_dir=args.truth) if args.truth else None
        views = init_views(tree, profiles, params)
        trace = run_expansion(views, profiles, params, truth=truth)
        save_views(out / "views.json", views)
        write_round_metrics(out / "rounds.csv", trace)
        write_edge_list(graph_from_views(views, "known_users"), out / "known_edges.txt")
        print(f"expanded {len(views)} views over {args.rounds} rounds -> {out}")

    elif args.command == "oracle":
        profiles = load_profiles(args.profiles)
        truth = compute_ground_truth(profiles, k=args.k, cache_dir=out)
        print(f"ground truth for {len(truth.top_k)} users cached in {out}")

    elif args.command == "query":
        profiles = load_profiles(args.profiles)
        corpus = load_embedding_file(args.corpus)
        views = load_views(args.views, profiles)
        graph = graph_from_views(views, args.neighbor_source)
        state = None
        if args.engine == "diffusion":
            state = diffuse_embeddings(graph, profiles, args.alpha)
        rows = []
        for uid in sorted(profiles):
            for doc in sorted(profiles[uid].test_docs):
                emb = corpus.get(doc)
                if emb is None:
                    continue
                task = QueryTask(uid, emb, doc, args.max_hops)
                if args.engine == "chain":
                    outcome = chain_hop(task, graph, profiles)
                elif args.engine == "random":
                    outcome = random_walk_query(task, graph, profiles, f"{args.seed}:{uid}:{doc}")
                else:
                    outcome = diffusion_query(task, graph, state, profiles)
                rows.append(
                    f"{args.engine},{uid},{doc},{int(outcome.found)},"
                    f"{outcome.hops_used},{outcome.messages_sent}"
                )
        csv_path = out / "queries.csv"
        with open(csv_path, "w", encoding="utf-8", newline="") as fh:
            fh.write("engine,origin,target_doc,found,hops_used,messages\n")
            fh.write("\n".join(rows) + ("\n" if rows else ""))
        found = sum(1 for r in rows if r.split(",")[3] == "1")
        print(f"{found}/{len(rows)} queries found -> {csv_path}")

    elif args.command in ("exp1", "exp2", "exp3", "scaling"):
        config = _config_from_args(args)
        runner = {
            "exp1": run_experiment_1,
            "exp2": run_experiment_2,
            "exp3": run_experiment_3,
            "scaling": run_scaling_check,
        }[args.command]
        csv_path = runner(config, out)
        print(f"wrote {csv_path}")

    return 0


if __name__ == "__main__":
    sys.exit(main())
