import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import ball_query_oracle, chamfer_oracle, fps_oracle

from spotfill import geometry as G
from spotfill.gradcheck import check_loss_grads
from spotfill.tensor import Tensor, tsum


# -- farthest point sampling ---------------------------------------------------

class TestFarthestPointSample:
    def test_full_count_is_permutation(self):
        rng = np.random.default_rng(0)
        pts = rng.uniform(-1, 1, (17, 3))
        out = G.farthest_point_sample(pts, 17)
        assert sorted(out.tolist()) == list(range(17))

    def test_full_count_with_duplicates_is_permutation(self):
        pts = np.zeros((6, 3))
        pts[3:] = 1.0
        out = G.farthest_point_sample(pts, 6)
        assert sorted(out.tolist()) == list(range(6))

    def test_colinear_spec_case(self):
        pts = np.zeros((4, 3))
        pts[:, 0] = [0.0, 1.0, 2.0, 10.0]
        assert G.farthest_point_sample(pts, 2).tolist() == [0, 3]
        assert G.farthest_point_sample(pts, 3).tolist() == [0, 3, 2]

    def test_matches_greedy_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(25):
            n = int(rng.integers(2, 30))
            pts = rng.uniform(-1, 1, (n, 3))
            count = int(rng.integers(1, n + 1))
            assert np.array_equal(G.farthest_point_sample(pts, count),
                                  fps_oracle(pts, count))

    def test_count_out_of_range(self):
        pts = np.zeros((3, 3))
        with pytest.raises(G.GeometryError):
            G.farthest_point_sample(pts, 4)
        with pytest.raises(G.GeometryError):
            G.farthest_point_sample(pts, 0)

    def test_deterministic_and_feature_independent(self):
        rng = np.random.default_rng(2)
        pts = rng.uniform(-1, 1, (40, 3))
        a = G.farthest_point_sample(pts, 12)
        b = G.farthest_point_sample(pts.copy(), 12)
        assert np.array_equal(a, b)

    def test_prefix_property(self):
        # greedy selection order makes smaller samples prefixes of larger ones
        rng = np.random.default_rng(3)
        pts = rng.uniform(-1, 1, (30, 3))
        full = G.farthest_point_sample(pts, 20)
        assert np.array_equal(G.farthest_point_sample(pts, 7), full[:7])


class TestBallQuery:
    def test_single_point_inside(self):
        q = np.zeros((1, 3))
        src = np.array([[0.5, 0, 0], [2.0, 0, 0]])
        nbr = G.ball_query(q, src, radius=1.0, max_samples=4)
        assert nbr.indices.tolist() == [[0, 0, 0, 0]]
        assert nbr.valid_counts.tolist() == [1]

    def test_two_inside_ascending_with_padding(self):
        q = np.zeros((1, 3))
        src = np.array([[0.5, 0, 0], [2.0, 0, 0]])
        nbr = G.ball_query(q, src, radius=3.0, max_samples=4)
        assert nbr.indices.tolist() == [[0, 1, 0, 0]]
        assert nbr.valid_counts.tolist() == [2]

    def test_none_inside_uses_global_nearest(self):
        q = np.zeros((1, 3))
        src = np.array([[5.0, 0, 0], [2.0, 0, 0], [9.0, 0, 0]])
        nbr = G.ball_query(q, src, radius=0.5, max_samples=3)
        assert nbr.indices.tolist() == [[1, 1, 1]]
        assert nbr.valid_counts.tolist() == [0]

    def test_strict_inequality_on_radius(self):
        q = np.zeros((1, 3))
        src = np.array([[1.0, 0.0, 0.0]])
        assert G.ball_query(q, src, radius=1.0, max_samples=2).valid_counts[0] == 0
        assert G.ball_query(q, src, radius=1.0 + 1e-9, max_samples=2).valid_counts[0] == 1

    def test_matches_exhaustive_oracle(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            q = rng.uniform(-1, 1, (rng.integers(1, 20), 3))
            src = rng.uniform(-1, 1, (64, 3))
            idx, counts = ball_query_oracle(q, src, 0.3, 6)
            nbr = G.ball_query(q, src, 0.3, 6)
            assert np.array_equal(nbr.indices, idx)
            assert np.array_equal(nbr.valid_counts, counts)

    def test_invalid_inputs(self):
        q = np.zeros((1, 3))
        src = np.ones((2, 3))
        with pytest.raises(G.GeometryError):
            G.ball_query(q, src, radius=-1.0, max_samples=2)
        with pytest.raises(G.GeometryError):
            G.ball_query(q, src, radius=1.0, max_samples=0)


class TestGroupFeatures:
    def test_self_neighborhood_rel_coords_zero(self):
        pts = np.array([[0.3, -0.2, 0.9]])
        nbr = G.NeighborIndex(indices=np.array([[0]]), valid_counts=np.array([1]))
        rel, grouped = G.group_features(nbr, pts, Tensor(np.array([[7.0]])), pts)
        assert np.allclose(rel.data, 0.0)
        assert grouped.data.tolist() == [[[7.0]]]

    def test_identity_map_recovers_features(self):
        rng = np.random.default_rng(5)
        pts = rng.uniform(-1, 1, (6, 3))
        feats = rng.uniform(-1, 1, (6, 4))
        nbr = G.NeighborIndex(indices=np.arange(6).reshape(6, 1),
                              valid_counts=np.ones(6, dtype=np.int64))
        _, grouped = G.group_features(nbr, pts, Tensor(feats), pts)
        assert np.allclose(grouped.data.squeeze(1), feats)

    def test_matches_loop_oracle_and_gradient_flows(self):
        rng = np.random.default_rng(6)
        src = rng.uniform(-1, 1, (10, 3))
        qry = rng.uniform(-1, 1, (4, 3))
        feats = Tensor(rng.uniform(-1, 1, (10, 5)), requires_grad=True)
        idx = rng.integers(0, 10, (4, 3))
        nbr = G.NeighborIndex(indices=idx, valid_counts=np.full(4, 3, dtype=np.int64))
        rel, grouped = G.group_features(nbr, src, feats, qry)
        for i in range(4):
            for s in range(3):
                assert np.allclose(rel.data[i, s], src[idx[i, s]] - qry[i])
                assert np.allclose(grouped.data[i, s], feats.data[idx[i, s]])
        w = rng.uniform(-1, 1, grouped.shape)

        def loss():
            _, g = G.group_features(nbr, src, feats, qry)
            return tsum(g * Tensor(w))

        res = check_loss_grads(loss, [("feats", feats)], tol=1e-6)
        assert res[0].ok, res[0]


class TestChamferDistance:
    def test_identical_clouds_zero(self):
        rng = np.random.default_rng(7)
        a = rng.uniform(-1, 1, (12, 3))
        assert G.chamfer_distance(Tensor(a), Tensor(a.copy()), squared=True).item() == 0.0
        assert G.chamfer_distance(Tensor(a), Tensor(a.copy()), squared=False).item() == 0.0

    def test_two_point_values(self):
        pc = Tensor(np.array([[0.0, 0.0, 0.0]]))
        pg = Tensor(np.array([[2.0, 0.0, 0.0]]))
        assert G.chamfer_distance(pc, pg, squared=False).item() == pytest.approx(4.0)
        assert G.chamfer_distance(pc, pg, squared=True).item() == pytest.approx(8.0)

    def test_matches_double_loop_oracle(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            a = rng.uniform(-1, 1, (16, 3))
            b = rng.uniform(-1, 1, (16, 3))
            for squared in (False, True):
                got = G.chamfer_distance(Tensor(a), Tensor(b), squared=squared).item()
                assert got == pytest.approx(chamfer_oracle(a, b, squared), abs=1e-12)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_symmetry_and_permutation_invariance(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.uniform(-1, 1, (int(rng.integers(1, 12)), 3))
        b = rng.uniform(-1, 1, (int(rng.integers(1, 12)), 3))
        ab = G.chamfer_distance(Tensor(a), Tensor(b), squared=True).item()
        ba = G.chamfer_distance(Tensor(b), Tensor(a), squared=True).item()
        assert ab == pytest.approx(ba, abs=1e-12)
        perm = rng.permutation(a.shape[0])
        ab_p = G.chamfer_distance(Tensor(a[perm]), Tensor(b), squared=True).item()
        assert ab == pytest.approx(ab_p, abs=1e-12)

    def test_empty_cloud_rejected(self):
        with pytest.raises(G.GeometryError):
            G.chamfer_distance(Tensor(np.zeros((0, 3))), Tensor(np.zeros((2, 3))))

    @pytest.mark.parametrize("squared", [True, False])
    def test_gradient_matches_fd(self, squared):
        rng = np.random.default_rng(9)
        a = Tensor(rng.uniform(-1, 1, (8, 3)), requires_grad=True)
        b = Tensor(rng.uniform(-1, 1, (10, 3)), requires_grad=True)

        def loss():
            return G.chamfer_distance(a, b, squared=squared)

        for res in check_loss_grads(loss, [("a", a), ("b", b)], tol=1e-5):
            assert res.ok, res

    def test_chamfer_both_agrees(self):
        rng = np.random.default_rng(10)
        a = rng.uniform(-1, 1, (9, 3))
        b = rng.uniform(-1, 1, (14, 3))
        cd_norm, cd_sq = G.chamfer_both(a, b)
        assert cd_norm == pytest.approx(
            G.chamfer_distance(Tensor(a), Tensor(b), squared=False).item(), abs=1e-12)
        assert cd_sq == pytest.approx(
            G.chamfer_distance(Tensor(a), Tensor(b), squared=True).item(), abs=1e-12)


class TestCompositeLoss:
    def _outputs(self, rng):
        return {k: Tensor(rng.uniform(-1, 1, (n, 3)))
                for k, n in (("p1", 12), ("p2", 6), ("p3", 3), ("fine", 24))}

    def test_all_zero_weights(self):
        rng = np.random.default_rng(11)
        gt = Tensor(rng.uniform(-1, 1, (24, 3)))
        loss, _ = G.composite_loss(self._outputs(rng), gt, G.LossWeights(0, 0, 0, 0))
        assert loss.item() == 0.0

    def test_fine_only_perfect_match(self):
        rng = np.random.default_rng(12)
        outputs = self._outputs(rng)
        gt = Tensor(outputs["fine"].data.copy())
        loss, terms = G.composite_loss(outputs, gt, G.LossWeights(0, 0, 0, 1.0))
        assert loss.item() == 0.0
        assert terms["fine"] == 0.0

    def test_weighted_sum_matches_hand_computation(self):
        rng = np.random.default_rng(13)
        outputs = self._outputs(rng)
        gt = Tensor(rng.uniform(-1, 1, (24, 3)))
        weights = G.LossWeights(10.0, 0.5, 0.5, 1.0)
        loss, terms = G.composite_loss(outputs, gt, weights)
        expect = 10.0 * terms["p1"] + 0.5 * terms["p2"] + 0.5 * terms["p3"] + terms["fine"]
        assert loss.item() == pytest.approx(expect, rel=1e-12)
        # terms really are resolution-matched subset chamfer values
        sub = G.farthest_point_sample(gt.data, 12)
        direct = G.chamfer_distance(outputs["p1"], Tensor(gt.data[sub]), squared=True).item()
        assert terms["p1"] == pytest.approx(direct, abs=1e-15)

    def test_negative_weight_rejected(self):
        rng = np.random.default_rng(14)
        with pytest.raises(ValueError):
            G.composite_loss(self._outputs(rng), Tensor(rng.uniform(-1, 1, (24, 3))),
                             G.LossWeights(-1, 0, 0, 0))


class TestNormalize:
    def test_already_normalized_unchanged(self):
        rng = np.random.default_rng(15)
        pts = rng.normal(size=(30, 3))
        pts -= pts.mean(axis=0)
        pts /= np.linalg.norm(pts, axis=1).max()
        out, center, scale = G.normalize_to_unit_sphere(pts)
        assert np.abs(out.xyz - pts).max() < 1e-12
        assert np.abs(center).max() < 1e-12
        assert scale == pytest.approx(1.0, abs=1e-12)

    def test_offset_cloud_centered(self):
        rng = np.random.default_rng(16)
        pts = rng.normal(size=(20, 3)) + 5.0
        out, center, scale = G.normalize_to_unit_sphere(pts)
        assert np.abs(out.xyz.mean(axis=0)).max() < 1e-12
        assert np.linalg.norm(out.xyz, axis=1).max() == pytest.approx(1.0, abs=1e-12)

    def test_round_trip(self):
        rng = np.random.default_rng(17)
        pts = rng.normal(size=(25, 3)) * 3.0 + np.array([1.0, -2.0, 0.5])
        out, center, scale = G.normalize_to_unit_sphere(pts)
        back = out.xyz * scale + center
        assert np.abs(back - pts).max() < 1e-12

    def test_degenerate_cloud_rejected(self):
        with pytest.raises(G.GeometryError):
            G.normalize_to_unit_sphere(np.ones((5, 3)))

    def test_invariant_max_norm(self):
        rng = np.random.default_rng(18)
        out, _, _ = G.normalize_to_unit_sphere(rng.normal(size=(50, 3)))
        assert np.linalg.norm(out.xyz, axis=1).max() <= 1.0 + 1e-9


class TestPointCloud:
    def test_rejects_bad_shape(self):
        with pytest.raises(G.GeometryError):
            G.PointCloud(np.zeros((3, 2)))

    def test_rejects_empty(self):
        with pytest.raises(G.GeometryError):
            G.PointCloud(np.zeros((0, 3)))

    def test_rejects_non_finite(self):
        pts = np.zeros((2, 3))
        pts[1, 2] = np.nan
        with pytest.raises(G.GeometryError):
            G.PointCloud(pts)
