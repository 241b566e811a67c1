"""Deterministic emulation of a semantic overlay network.

Users are embedded via the mean of their document vectors, organized into a
hierarchically clustered binary tree (with boundary "cloning"), refined
through gossip-style expansion rounds, and queried with hop-limited greedy
forwarding. Baselines: preferential-attachment graphs, random-peer walks,
and personalized-pagerank embedding diffusion.
"""

__version__ = "0.1.0"

from .embedding import (
    DegenerateEmbeddingError,
    DimensionMismatchError,
    as_embedding,
    cosine_similarity,
    euclidean_distance,
    mean_embedding,
)
from .workload import UserProfile, synthesize_workload
from .tree import TreeParams, build_tree, tree_stats
from .expansion import ExpansionParams, init_views, run_expansion
from .oracle import compute_ground_truth, recall_of_50

__all__ = [
    "DegenerateEmbeddingError",
    "DimensionMismatchError",
    "ExpansionParams",
    "TreeParams",
    "UserProfile",
    "as_embedding",
    "build_tree",
    "compute_ground_truth",
    "cosine_similarity",
    "euclidean_distance",
    "init_views",
    "mean_embedding",
    "recall_of_50",
    "run_expansion",
    "synthesize_workload",
    "tree_stats",
]
