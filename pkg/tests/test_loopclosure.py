import numpy as np
import pytest

from roomslam.clustering import RoomCluster
from roomslam.geometry import SE3Pose, so3_exp
from roomslam.graph import Keyframe, LocalFeature, PoseGraph
from roomslam.loopclosure import (MissingFeaturesError, close_loops, propose,
                                  verify_pnp)
from roomslam.pnp import (CameraIntrinsics, hamming_distance_matrix,
                          match_mutual)
from roomslam.semantics import EmbeddingBank

CAM = CameraIntrinsics(fx=320.0, fy=320.0, cx=320.0, cy=240.0, width=640, height=480)


def synthetic_frames(rel: SE3Pose, n_points=60, outlier_frac=0.0, seed=0):
    """Two keyframes observing the same 3D points; `rel` = T_query->candidate.

    Candidate features carry points in the candidate camera frame; query
    features carry the pixels of the same points seen through `rel`."""
    rng = np.random.default_rng(seed)
    pts_c = np.stack([rng.uniform(-3, 3, n_points), rng.uniform(-2, 2, n_points),
                      rng.uniform(2.5, 7.0, n_points)], axis=1)
    R = rel.rotation_matrix()
    pts_q = pts_c @ R.T + rel.translation
    keep = pts_q[:, 2] > 0.3
    pts_c, pts_q = pts_c[keep], pts_q[keep]
    pix_q = CAM.project(pts_q)
    pix_c = CAM.project(pts_c)
    inb = CAM.in_bounds(pix_q) & CAM.in_bounds(pix_c)
    pts_c, pts_q, pix_q, pix_c = pts_c[inb], pts_q[inb], pix_q[inb], pix_c[inb]
    descs = []
    seen = set()
    while len(descs) < len(pts_c):
        d = rng.bytes(32)
        if d not in seen:
            seen.add(d)
            descs.append(d)
    n_out = int(round(outlier_frac * len(pts_c)))
    if n_out:
        idx = rng.choice(len(pts_c), n_out, replace=False)
        pix_q = pix_q.copy()
        pix_q[idx] = np.stack([rng.uniform(0, 639, n_out),
                               rng.uniform(0, 479, n_out)], axis=1)
    qf = tuple(LocalFeature(pixel=pix_q[i], point_cam=pts_q[i], descriptor=descs[i])
               for i in range(len(pts_c)))
    cf = tuple(LocalFeature(pixel=pix_c[i], point_cam=pts_c[i], descriptor=descs[i])
               for i in range(len(pts_c)))
    return qf, cf


def kf(nid, features, label="office", pos=(0, 0, 0)):
    return Keyframe(id=nid, stamp=float(nid),
                    pose=SE3Pose(np.asarray(pos, float), np.array([0, 0, 0, 1.0])),
                    embedding_row=0, features=features, label=label)


class TestMatching:
    def test_hamming(self):
        a = np.array([[0b1111, 0], [0, 0]], dtype=np.uint8)
        b = np.array([[0b1111, 0], [0b1010, 0]], dtype=np.uint8)
        D = hamming_distance_matrix(a, b)
        assert D[0, 0] == 0 and D[0, 1] == 2 and D[1, 0] == 4 and D[1, 1] == 2

    def test_mutual_matches_identity(self):
        rng = np.random.default_rng(0)
        d = rng.integers(0, 256, size=(20, 32), endpoint=False).astype(np.uint8)
        perm = rng.permutation(20)
        matches = match_mutual(d, d[perm])
        assert sorted(matches) == sorted((int(perm[j]), j) for j in range(20))


class TestVerifyPnp:
    def test_identical_frames_give_identity(self):
        qf, cf = synthetic_frames(SE3Pose.identity())
        result = verify_pnp(kf(0, qf), kf(1, cf), CAM)
        assert result is not None
        rel, inliers = result
        assert np.linalg.norm(rel.translation) < 1e-6
        assert rel.rotation_angle_to(SE3Pose.identity()) < 1e-6
        assert inliers == len(qf)

    def test_noiseless_offset_recovered(self):
        rel = SE3Pose.from_rt(so3_exp(np.array([0.0, np.deg2rad(10.0), 0.0])),
                              np.array([0.4, 0.0, 0.0]))
        qf, cf = synthetic_frames(rel, seed=1)
        got, _ = verify_pnp(kf(0, qf), kf(1, cf), CAM)
        assert np.linalg.norm(got.translation - rel.translation) < 1e-4
        assert got.rotation_angle_to(rel) < 1e-4

    def test_forty_percent_outliers_recovered(self):
        rel = SE3Pose.from_rt(so3_exp(np.array([0.0, np.deg2rad(10.0), 0.0])),
                              np.array([0.4, 0.0, 0.0]))
        qf, cf = synthetic_frames(rel, n_points=80, outlier_frac=0.4, seed=2)
        got, inliers = verify_pnp(kf(0, qf), kf(1, cf), CAM, seed=5)
        assert np.linalg.norm(got.translation - rel.translation) < 1e-2
        assert got.rotation_angle_to(rel) < 1e-2
        assert abs(inliers / len(qf) - 0.6) < 0.12

    def test_missing_features_is_an_error(self):
        qf, cf = synthetic_frames(SE3Pose.identity())
        with pytest.raises(MissingFeaturesError):
            verify_pnp(kf(0, None), kf(1, cf), CAM)

    def test_too_few_matches_is_failure_not_error(self):
        qf, cf = synthetic_frames(SE3Pose.identity(), n_points=6)
        assert verify_pnp(kf(0, qf[:4]), kf(1, cf[:4]), CAM) is None

    def test_deterministic_with_fixed_seed(self):
        rel = SE3Pose.from_rt(so3_exp(np.array([0.1, 0.05, 0.0])),
                              np.array([0.3, 0.1, 0.0]))
        qf, cf = synthetic_frames(rel, outlier_frac=0.3, seed=3)
        a = verify_pnp(kf(0, qf), kf(1, cf), CAM, seed=9)
        b = verify_pnp(kf(0, qf), kf(1, cf), CAM, seed=9)
        assert np.array_equal(a[0].translation, b[0].translation)
        assert np.array_equal(a[0].rotation, b[0].rotation)
        assert a[1] == b[1]

    def test_min_inliers_monotone_gating(self):
        rel = SE3Pose.from_rt(so3_exp(np.array([0.0, 0.1, 0.0])),
                              np.array([0.2, 0.0, 0.0]))
        qf, cf = synthetic_frames(rel, n_points=40, outlier_frac=0.3, seed=4)
        accepted = []
        for thr in (5, 10, 20, 30, 100):
            r = verify_pnp(kf(0, qf), kf(1, cf), CAM, min_inliers=thr, seed=1)
            accepted.append(r is not None)
        # once rejected at some threshold, stays rejected above it
        assert accepted == sorted(accepted, reverse=True)


def cluster(cid, label, members, mean):
    return RoomCluster(cluster_id=cid, label=label, members=set(members),
                       mean_pos=np.asarray(mean, float))


def graph_for_propose():
    g = PoseGraph(gate_m=0.0)
    rows = []
    rng = np.random.default_rng(10)
    base = rng.normal(size=8)
    for i in range(60):
        g.add_keyframe(SE3Pose(np.array([i * 0.5, 0, 0]), np.array([0, 0, 0, 1.0])),
                       float(i), i)
        g.set_label(i, "office" if i < 40 else "kitchen")
        rows.append(base + 0.05 * rng.normal(size=8))
    bank = EmbeddingBank(np.array(rows, dtype=np.float32))
    return g, bank


class TestPropose:
    def test_no_matching_cluster_gives_empty(self):
        g, bank = graph_for_propose()
        clusters = [cluster(0, "kitchen", range(40, 60), (25, 0, 0))]
        g.set_label(5, "office")
        assert propose(5, g.snapshot(), clusters, bank, min_loop_gap=1) == []

    def test_candidates_sorted_by_cosine(self):
        g, bank = graph_for_propose()
        clusters = [cluster(0, "office", range(0, 10), (2.5, 0, 0))]
        out = propose(59 - 20, g.snapshot(), clusters, bank, max_candidates=5,
                      min_loop_gap=20)
        assert len(out) == 5
        cosines = [c.cosine for c in out]
        assert cosines == sorted(cosines, reverse=True)
        assert all(c.cluster_id == 0 for c in out)

    def test_nearest_cluster_wins(self):
        g, bank = graph_for_propose()
        near = cluster(0, "office", range(10, 14), (6.0, 0, 0))
        far = cluster(1, "office", range(0, 4), (50.0, 0, 0))
        out = propose(39, g.snapshot(), [far, near], bank, min_loop_gap=20)
        assert out and all(c.cluster_id == 0 for c in out)

    def test_recent_nodes_excluded(self):
        g, bank = graph_for_propose()
        clusters = [cluster(0, "office", range(0, 40), (10, 0, 0))]
        out = propose(39, g.snapshot(), clusters, bank, max_candidates=0,
                      min_loop_gap=30)
        assert out and all(39 - c.candidate_id >= 30 for c in out)

    def test_max_candidates_zero_means_all(self):
        g, bank = graph_for_propose()
        clusters = [cluster(0, "office", range(0, 10), (2.5, 0, 0))]
        out = propose(39, g.snapshot(), clusters, bank, max_candidates=0,
                      min_loop_gap=20)
        assert len(out) == 10

    def test_unlabeled_query_rejected(self):
        g, bank = graph_for_propose()
        g.node(30).label = None
        with pytest.raises(ValueError):
            propose(30, g.snapshot(), [], bank)

    def test_label_gating_property(self):
        g, bank = graph_for_propose()
        clusters = [cluster(0, "office", range(0, 10), (2.5, 0, 0)),
                    cluster(1, "kitchen", range(40, 50), (22.5, 0, 0))]
        for query in (38, 39):
            for c in propose(query, g.snapshot(), clusters, bank, min_loop_gap=20):
                assert g.node(c.candidate_id).label == g.node(query).label == "office"


class TestCloseLoops:
    def build_graph(self, n_sharing):
        """Query plus 3 candidates; `n_sharing` of them genuinely share the
        query's geometry (identity relative pose), the rest carry unrelated
        descriptors so verification must reject them."""
        rng = np.random.default_rng(5)
        g = PoseGraph(gate_m=0.0)
        qf, cf = synthetic_frames(SE3Pose.identity(), n_points=50, seed=6)
        rows = []
        base = rng.normal(size=8)
        for i in range(3):
            feats = cf if i < n_sharing else tuple(
                LocalFeature(pixel=f.pixel, point_cam=f.point_cam,
                             descriptor=rng.bytes(32)) for f in cf)
            g.add_keyframe(SE3Pose(np.array([0.1 * i, 0, 0]),
                                   np.array([0, 0, 0, 1.0])), float(i), i,
                           features=feats)
            g.set_label(i, "office")
            rows.append(base + 0.01 * rng.normal(size=8))
        qid = g.add_keyframe(SE3Pose(np.array([0.35, 0, 0]),
                                     np.array([0, 0, 0, 1.0])), 50.0, 3,
                             features=qf)
        g.set_label(qid, "office")
        rows.append(base)
        bank = EmbeddingBank(np.array(rows, dtype=np.float32))
        clusters = [cluster(0, "office", range(3), (0.1, 0, 0))]
        return g, bank, clusters, qid

    def test_empty_candidates_add_nothing(self):
        g, bank, clusters, qid = self.build_graph(3)
        before = len(g.edges)
        out = close_loops(qid, g.snapshot(), [], g, bank, CAM, min_loop_gap=1)
        assert out == [] and len(g.edges) == before

    def test_single_pass_single_edge(self):
        g, bank, clusters, qid = self.build_graph(1)
        before = len(g.edges)
        out = close_loops(qid, g.snapshot(), clusters, g, bank, CAM,
                          min_loop_gap=1, max_candidates=0)
        assert len(out) == 1 and len(g.edges) == before + 1

    def test_two_of_three_pass(self):
        g, bank, clusters, qid = self.build_graph(2)
        before = len(g.edges)
        out = close_loops(qid, g.snapshot(), clusters, g, bank, CAM,
                          min_loop_gap=1, max_candidates=0)
        assert len(out) == 2
        assert len(g.edges) == before + 2
        for r in out:
            # features encode an identity relative pose regardless of the
            # graph's pose estimates
            assert np.linalg.norm(r.rel_pose.translation) < 1e-6
        assert all(e.from_id == qid for e in g.edges[before:])
        assert {e.to_id for e in g.edges[before:]} == \
            {r.candidate.candidate_id for r in out}
