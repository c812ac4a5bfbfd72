import numpy as np
import pytest

from roomslam.clustering import (assign_clusters, merge_clusters, segment_floors)
from roomslam.geometry import SE3Pose
from roomslam.graph import PoseGraph


def labeled_graph(points_labels, gate=0.0):
    g = PoseGraph(gate_m=gate)
    for i, (p, label) in enumerate(points_labels):
        g.add_keyframe(SE3Pose(np.asarray(p, float), np.array([0, 0, 0, 1.0])),
                       float(i), 0)
        if label is not None:
            g.set_label(i, label)
    return g


class TestAssign:
    def test_tight_same_label_forms_one_cluster(self):
        pts = [((x * 0.3, 0, 0), "office") for x in range(6)]
        clusters = assign_clusters(labeled_graph(pts).snapshot(), radius_m=3.0)
        assert len(clusters) == 1
        assert clusters[0].members == set(range(6))

    def test_distant_groups_split(self):
        pts = [((0, 0, 0), "office"), ((1, 0, 0), "office"),
               ((20, 0, 0), "office"), ((21, 0, 0), "office")]
        clusters = assign_clusters(labeled_graph(pts).snapshot(), radius_m=3.0)
        assert sorted(sorted(c.members) for c in clusters) == [[0, 1], [2, 3]]
        assert all(c.label == "office" for c in clusters)

    def test_alternating_labels_split_by_label(self):
        pts = [((0, 0, 0), "a"), ((0.1, 0, 0), "b"),
               ((0.2, 0, 0), "a"), ((0.3, 0, 0), "b")]
        clusters = assign_clusters(labeled_graph(pts).snapshot())
        assert len(clusters) == 2
        by_label = {c.label: sorted(c.members) for c in clusters}
        assert by_label == {"a": [0, 2], "b": [1, 3]}

    def test_unlabeled_rejected(self):
        g = labeled_graph([((0, 0, 0), None)])
        with pytest.raises(ValueError):
            assign_clusters(g.snapshot())

    def test_mean_matches_brute_force(self):
        rng = np.random.default_rng(0)
        pts = [((x, 0, 0), "r") for x in rng.uniform(0, 2, 20)]
        snap = labeled_graph(pts).snapshot()
        for c in assign_clusters(snap):
            expected = np.mean([snap.node(m).pose.translation for m in c.members],
                               axis=0)
            assert np.allclose(c.mean_pos, expected, atol=1e-6)

    def test_partition(self):
        rng = np.random.default_rng(1)
        pts = [(tuple(rng.uniform(0, 30, 3)), rng.choice(["a", "b", "c"]))
               for _ in range(60)]
        snap = labeled_graph(pts).snapshot()
        clusters = assign_clusters(snap)
        seen = set()
        for c in clusters:
            assert not (c.members & seen)
            seen |= c.members
            assert all(snap.node(m).label == c.label for m in c.members)
        assert seen == set(range(60))


class TestMerge:
    def test_adjacent_same_label_merges(self):
        # two office groups joined by consecutive office nodes, far means
        pts = [((x * 1.2, 0, 0), "office") for x in range(8)]
        snap = labeled_graph(pts, gate=0.0).snapshot()
        clusters = assign_clusters(snap, radius_m=2.0)
        assert len(clusters) > 1
        merged = merge_clusters(clusters, snap, radius_m=2.0)
        assert len(merged) == 1
        assert merged[0].members == set(range(8))

    def test_corridor_between_blocks_merge(self):
        pts = ([((float(x), 0, 0), "office") for x in range(3)] +
               [((3.0 + x, 0, 0), "corridor") for x in range(3)] +
               [((6.0 + x, 0, 0), "office") for x in range(3)])
        snap = labeled_graph(pts).snapshot()
        clusters = assign_clusters(snap, radius_m=2.0)
        merged = merge_clusters(clusters, snap, radius_m=2.0)
        office = [c for c in merged if c.label == "office"]
        assert len(office) == 2

    def test_different_labels_never_merge(self):
        pts = [((0, 0, 0), "a"), ((0.5, 0, 0), "b")]
        snap = labeled_graph(pts).snapshot()
        merged = merge_clusters(assign_clusters(snap), snap)
        assert len(merged) == 2

    def test_fixed_point(self):
        rng = np.random.default_rng(2)
        pts = [(tuple(rng.uniform(0, 12, 2)) + (0.0,), rng.choice(["a", "b"]))
               for _ in range(40)]
        snap = labeled_graph(pts).snapshot()
        once = merge_clusters(assign_clusters(snap), snap)
        twice = merge_clusters(once, snap)
        assert sorted(sorted(c.members) for c in once) == \
            sorted(sorted(c.members) for c in twice)

    def test_mean_recomputed(self):
        pts = [((x * 1.2, 0, 0), "office") for x in range(8)]
        snap = labeled_graph(pts).snapshot()
        merged = merge_clusters(assign_clusters(snap, radius_m=2.0), snap,
                                radius_m=2.0)
        expected = np.mean([snap.node(m).pose.translation
                            for m in merged[0].members], axis=0)
        assert np.allclose(merged[0].mean_pos, expected, atol=1e-6)


def floors_of(points_labels, **kw):
    snap = labeled_graph(points_labels).snapshot()
    clusters = merge_clusters(assign_clusters(snap), snap)
    mapping = segment_floors(clusters, snap, **kw)
    return clusters, mapping


class TestFloors:
    def test_no_stairs_single_floor(self):
        pts = [((float(x), 0, 0), "office") for x in range(5)]
        clusters, mapping = floors_of(pts)
        assert set(mapping.values()) == {0}

    def test_two_floors_ordered_by_height(self):
        pts = ([((float(x), 0, 0.0), "office") for x in range(4)] +
               [((4.0 + x, 0, 1.0 * x), "stairs") for x in range(4)] +
               [((8.0 + x, 0, 3.0), "kitchen") for x in range(4)])
        clusters, mapping = floors_of(pts)
        by_label = {c.label: mapping[c.cluster_id] for c in clusters}
        assert by_label["office"] == 0
        assert by_label["kitchen"] == 1
        assert by_label["stairs"] == 0  # lower adjacent segment

    def test_two_stairways_same_storeys_unify(self):
        pts = ([((float(x), 0, 0.0), "office") for x in range(4)] +
               [((4.0 + x, 0, 1.0 * x), "stairs") for x in range(4)] +
               [((8.0 + x, 0, 3.0), "kitchen") for x in range(4)] +
               [((12.0 + x, 0, 3.0 - 1.0 * x), "stairs") for x in range(4)] +
               [((16.0 + x, 0, 0.0), "lounge") for x in range(4)])
        clusters, mapping = floors_of(pts)
        by_label = {c.label: mapping[c.cluster_id] for c in clusters}
        assert by_label["office"] == 0 and by_label["lounge"] == 0
        assert by_label["kitchen"] == 1
        assert len(set(mapping.values())) == 2

    def test_floor_heights_strictly_increase(self):
        pts = ([((float(x), 0, 0.0), "a") for x in range(3)] +
               [((3.0 + x, 0, 1.2 * x), "stairs") for x in range(3)] +
               [((6.0 + x, 0, 3.0), "b") for x in range(3)] +
               [((9.0 + x, 0, 3.0 + 1.2 * x), "stairs") for x in range(3)] +
               [((12.0 + x, 0, 6.0), "c") for x in range(3)])
        snap = labeled_graph(pts).snapshot()
        clusters = merge_clusters(assign_clusters(snap), snap)
        mapping = segment_floors(clusters, snap)
        zs = {}
        for c in clusters:
            if c.label != "stairs":
                zs.setdefault(mapping[c.cluster_id], []).append(c.mean_pos[2])
        keys = sorted(zs)
        assert keys == list(range(len(keys)))
        means = [np.mean(zs[k]) for k in keys]
        assert all(a < b for a, b in zip(means[:-1], means[1:]))

    def test_derived_view_deterministic(self):
        rng = np.random.default_rng(3)
        pts = [(tuple(rng.uniform(0, 15, 2)) + (0.0,), rng.choice(["a", "b", "stairs"]))
               for _ in range(50)]
        snap = labeled_graph(pts).snapshot()
        runs = []
        for _ in range(2):
            clusters = merge_clusters(assign_clusters(snap), snap)
            mapping = segment_floors(clusters, snap)
            runs.append((sorted((c.label, tuple(sorted(c.members))) for c in clusters),
                         sorted(mapping.items())))
        assert runs[0] == runs[1]
