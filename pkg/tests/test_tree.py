import json
import random

import numpy as np
import pytest

from sonsim.tree import (
    DuplicateUserError,
    LeafNode,
    PlacementRef,
    SplitNode,
    Tree,
    TreeParams,
    build_tree,
    tree_stats,
)
from sonsim.workload import UserProfile, synthesize_workload


def make_profiles(embeddings):
    return {
        uid: UserProfile(uid, frozenset({f"{uid}_doc"}), frozenset(), np.asarray(e, dtype=float))
        for uid, e in embeddings.items()
    }


def clustered_profiles(n, seed, dim=8, clusters=4):
    profiles, _ = synthesize_workload(n, clusters, 15, dim, 0.15, 0.4, rng_seed=seed, test_size=3)
    return profiles


class TestInsert:
    def test_first_user_lands_in_root_leaf(self):
        tree = Tree(TreeParams(leaf_capacity=5), dim=2)
        landed = tree.insert_user("u1", np.array([1.0, 0.0]))
        assert landed == {0}
        assert [ref.user_id for ref in tree.nodes[0].users] == ["u1"]

    def test_duplicate_user_rejected(self):
        tree = Tree(TreeParams(leaf_capacity=5), dim=2)
        tree.insert_user("u1", np.array([1.0, 0.0]))
        with pytest.raises(DuplicateUserError):
            tree.insert_user("u1", np.array([0.0, 1.0]))

    def test_zero_threshold_single_placement_everywhere(self):
        profiles = clustered_profiles(120, seed=1)
        tree = build_tree(profiles, TreeParams(leaf_capacity=10, clone_threshold=0.0, rng_seed=1))
        stats = tree_stats(tree)
        assert stats.clones_mean == 1.0
        assert stats.clones_std == 0.0
        assert all(count == 1 for count in stats.clones_per_user.values())

    def test_equidistant_user_clones_with_positive_threshold(self):
        tree = Tree(TreeParams(leaf_capacity=4, clone_threshold=1e-6), dim=2)
        # force one split with two tight groups, then probe the midline
        for i, x in enumerate([0.0, 0.1, 10.0, 10.1, 0.05]):
            tree.insert_user(f"u{i}", np.array([x, 0.0]))
        root = tree.nodes[tree.root_id]
        assert isinstance(root, SplitNode)
        mid = (root.centroid_a + root.centroid_b) / 2.0
        landed = tree.insert_user("probe", mid)
        assert len(landed) == 2  # |d1 - d2| = 0 < threshold

    def test_capacity_respected_at_rest(self):
        for seed in (3, 4):
            profiles = clustered_profiles(90, seed=seed)
            tree = build_tree(profiles, TreeParams(leaf_capacity=7, clone_threshold=2e-2, rng_seed=seed))
            for leaf in tree.leaves():
                assert len(leaf.users) <= 7

    def test_clone_indexes_dense_per_user(self):
        profiles = clustered_profiles(80, seed=5)
        tree = build_tree(profiles, TreeParams(leaf_capacity=6, clone_threshold=5e-2, rng_seed=5))
        seen: dict[str, set[int]] = {}
        for leaf in tree.leaves():
            for ref in leaf.users:
                seen.setdefault(ref.user_id, set()).add(ref.clone_index)
        assert any(len(s) > 1 for s in seen.values())  # cloning actually happened
        for uid, idxs in seen.items():
            assert idxs == set(range(len(idxs)))


class TestBuild:
    def test_fifty_users_single_leaf(self):
        embs = {f"u{i:02d}": np.array([float(i), 1.0]) for i in range(50)}
        tree = build_tree(make_profiles(embs), TreeParams(leaf_capacity=50, rng_seed=0))
        assert len(list(tree.leaves())) == 1
        assert tree.height() == 0

    def test_fifty_one_users_split_root(self):
        rng = np.random.default_rng(0)
        embs = {f"u{i:02d}": rng.standard_normal(3) for i in range(51)}
        tree = build_tree(make_profiles(embs), TreeParams(leaf_capacity=50, rng_seed=7))
        root = tree.nodes[tree.root_id]
        assert isinstance(root, SplitNode)
        leaf_a = tree.nodes[root.child_a]
        leaf_b = tree.nodes[root.child_b]
        assert isinstance(leaf_a, LeafNode) and isinstance(leaf_b, LeafNode)
        roster_a = {ref.user_id for ref in leaf_a.users}
        roster_b = {ref.user_id for ref in leaf_b.users}
        # with threshold 0 the rosters partition all 51 users
        assert roster_a | roster_b == set(embs)
        assert not roster_a & roster_b
        assert roster_a and roster_b
        # and each user sits on the closer-centroid side (ties toward A)
        for uid in embs:
            d1 = np.linalg.norm(embs[uid] - root.centroid_a)
            d2 = np.linalg.norm(embs[uid] - root.centroid_b)
            expected = roster_a if d1 <= d2 else roster_b
            assert uid in expected

    def test_deterministic_given_seed(self):
        profiles = clustered_profiles(100, seed=8)
        params = TreeParams(leaf_capacity=9, clone_threshold=1e-2, rng_seed=11)
        t1 = build_tree(profiles, params)
        t2 = build_tree(profiles, params)
        assert t1.to_json() == t2.to_json()

    def test_partition_property_at_zero_threshold(self):
        profiles = clustered_profiles(130, seed=9)
        tree = build_tree(profiles, TreeParams(leaf_capacity=8, clone_threshold=0.0, rng_seed=2))
        seen: list[str] = []
        for leaf in tree.leaves():
            seen.extend(ref.user_id for ref in leaf.users)
        assert len(seen) == len(profiles)
        assert set(seen) == set(profiles)

    def test_monotone_cloning_in_threshold(self):
        profiles = clustered_profiles(150, seed=10)
        grid = [0.0, 1e-6, 1e-5, 1e-4, 1e-3, 5e-3]
        means = []
        for delta in grid:
            tree = build_tree(profiles, TreeParams(leaf_capacity=10, clone_threshold=delta, rng_seed=3))
            means.append(tree_stats(tree).clones_mean)
        assert means[0] == 1.0
        assert all(b >= a for a, b in zip(means, means[1:]))

    def test_height_bound_on_balanced_workload(self):
        profiles = clustered_profiles(1600, seed=12, dim=16, clusters=8)
        tree = build_tree(profiles, TreeParams(leaf_capacity=50, clone_threshold=0.0, rng_seed=4))
        # 2 * log2(1600 / 50) + 2ic = 12 with slack factor 2 over the ideal 5
        assert tree.height() <= 12

    def test_routing_consistency_for_post_split_inserts(self):
        profiles = clustered_profiles(140, seed=13)
        tree = build_tree(profiles, TreeParams(leaf_capacity=10, clone_threshold=0.0, rng_seed=5))
        final_splits = tree.split_count
        probed = 0
        for uid, splits_after in tree.insertion_log:
            if splits_after != final_splits:
                continue  # a later split may have moved this user's leaf
            probed += 1
            leaves = tree.traverse(profiles[uid].user_embedding, clone_threshold=0.0)
            assert len(leaves) == 1
            assert leaves[0] in tree.user_placements[uid]
        assert probed > 0


class TestBfsCollect:
    def _four_leaf_tree(self):
        # root -> (A, B); A -> (leaf3, leaf4); B -> (leaf6, leaf7)
        tree = Tree(TreeParams(leaf_capacity=50), dim=2)
        tree.nodes = {
            0: SplitNode(0, None, np.array([0.0, 0.0]), np.array([10.0, 0.0]), 1, 2),
            1: SplitNode(1, 0, np.array([0.0, 0.0]), np.array([3.0, 0.0]), 3, 4),
            2: SplitNode(2, 0, np.array([7.0, 0.0]), np.array([10.0, 0.0]), 6, 7),
            3: LeafNode(3, 1, [PlacementRef("a1", 0), PlacementRef("a2", 0)]),
            4: LeafNode(4, 1, [PlacementRef("b1", 0), PlacementRef("b2", 0)]),
            6: LeafNode(6, 2, [PlacementRef("c1", 0), PlacementRef("c2", 0)]),
            7: LeafNode(7, 2, [PlacementRef("d1", 0), PlacementRef("d2", 0)]),
        }
        for leaf in tree.leaves():
            for ref in leaf.users:
                tree.user_placements.setdefault(ref.user_id, []).append(leaf.node_id)
        return tree

    def test_local_leaf_satisfies_small_need(self):
        tree = self._four_leaf_tree()
        refs = tree.bfs_collect(3, needed=2)
        assert {r.user_id for r in refs} == {"a1", "a2"}

    def test_two_leaf_exhaustion_returns_fewer(self):
        tree = Tree(TreeParams(leaf_capacity=50), dim=2)
        tree.nodes = {
            0: SplitNode(0, None, np.array([0.0, 0.0]), np.array([1.0, 0.0]), 1, 2),
            1: LeafNode(1, 0, [PlacementRef("x", 0)]),
            2: LeafNode(2, 0, [PlacementRef("y", 0)]),
        }
        refs = tree.bfs_collect(1, needed=10)
        assert {r.user_id for r in refs} == {"x", "y"}

    def test_nearest_leaf_collected_before_far_subtree(self):
        tree = self._four_leaf_tree()
        refs = tree.bfs_collect(3, needed=6)
        users = [r.user_id for r in refs]
        assert set(users[:2]) == {"a1", "a2"}
        assert set(users[2:4]) == {"b1", "b2"}  # sibling leaf 4 before leaves 6/7
        assert set(users[4:6]) <= {"c1", "c2", "d1", "d2"}

    def test_exclude_requesting_user(self):
        tree = self._four_leaf_tree()
        refs = tree.bfs_collect(3, needed=8, exclude_user="a1")
        assert "a1" not in {r.user_id for r in refs}

    def test_randomized_within_leaf_is_seeded(self):
        tree = self._four_leaf_tree()
        r1 = tree.bfs_collect(3, needed=6, rng=random.Random(1))
        r2 = tree.bfs_collect(3, needed=6, rng=random.Random(1))
        assert r1 == r2


class TestStats:
    def test_single_leaf_stats(self):
        embs = {f"u{i}": np.array([float(i), 1.0]) for i in range(5)}
        tree = build_tree(make_profiles(embs), TreeParams(leaf_capacity=10, rng_seed=0))
        stats = tree_stats(tree)
        assert stats.height == 0
        assert stats.leaf_count == 1
        assert stats.leaf_sizes == [5]
        assert stats.users_per_leaf_hist == {5: 1}
        assert stats.clones_mean == 1.0 and stats.clones_median == 1.0


class TestSerialization:
    def test_round_trip_lossless(self):
        profiles = clustered_profiles(90, seed=14)
        tree = build_tree(profiles, TreeParams(leaf_capacity=8, clone_threshold=1e-2, rng_seed=6))
        dumped = tree.to_json()
        restored = Tree.from_json(dumped)
        assert restored.to_json() == dumped
        # structural spot checks
        assert restored.root_id == tree.root_id
        assert restored.user_placements == tree.user_placements
        stats_a, stats_b = tree_stats(tree), tree_stats(restored)
        assert stats_a.height == stats_b.height
        assert stats_a.leaf_sizes == stats_b.leaf_sizes

    def test_loaded_tree_is_read_only(self):
        embs = {f"u{i}": np.array([float(i), 1.0]) for i in range(3)}
        tree = build_tree(make_profiles(embs), TreeParams(leaf_capacity=10, rng_seed=0))
        restored = Tree.from_json(tree.to_json())
        with pytest.raises(RuntimeError):
            restored.insert_user("new", np.array([9.0, 9.0]))

    def test_json_is_valid_and_sorted(self):
        embs = {f"u{i}": np.array([float(i), 1.0]) for i in range(3)}
        tree = build_tree(make_profiles(embs), TreeParams(leaf_capacity=10, rng_seed=0))
        payload = json.loads(tree.to_json())
        assert payload["dim"] == 2
        assert payload["nodes"][0]["kind"] == "leaf"
