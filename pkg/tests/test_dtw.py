import numpy as np
import pytest

from perceptimetric import FeatureMatrix, cosine_distance, delta, dtw_cost
from perceptimetric.dtw import cosine_distance_grid

from oracles import brute_force_dtw, brute_force_dtw_value, cosine_grid_reference, \
    random_feature_matrix


def fm(rows, sid="s"):
    return FeatureMatrix(stimulus_id=sid, data=np.asarray(rows, dtype=float),
                         frame_period=0.01)


class TestCosineDistance:
    def test_identical_direction(self):
        assert cosine_distance([1.0, 0.0], [1.0, 0.0]) == 0.0

    def test_orthogonal(self):
        assert cosine_distance([1.0, 0.0], [0.0, 1.0]) == 1.0

    def test_opposite(self):
        assert cosine_distance([1.0, 0.0], [-1.0, 0.0]) == 2.0

    def test_near_zero_norm_returns_one(self):
        assert cosine_distance([0.0, 0.0], [1.0, 0.0]) == 1.0
        assert cosine_distance([1.0, 0.0], [1e-13, 0.0]) == 1.0

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            cosine_distance([1.0, 0.0], [1.0, 0.0, 0.0])

    def test_grid_matches_reference(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            a = rng.normal(size=(rng.integers(1, 7), 3))
            b = rng.normal(size=(rng.integers(1, 7), 3))
            grid, degenerate = cosine_distance_grid(a, b)
            assert degenerate == 0
            assert np.allclose(grid, cosine_grid_reference(a, b), atol=1e-12)

    def test_grid_counts_degenerate_frames(self):
        a = np.array([[0.0, 0.0], [1.0, 0.0]])
        b = np.array([[0.0, 1.0]])
        grid, degenerate = cosine_distance_grid(a, b)
        assert degenerate == 1
        assert grid[0, 0] == 1.0


class TestDtwCost:
    def test_self_alignment_is_zero(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            a = random_feature_matrix(rng, int(rng.integers(1, 9)), 4)
            cost = dtw_cost(a, a)
            assert cost.value == 0.0
            assert cost.path_length == a.frames

    def test_single_cell_grid(self):
        cost = dtw_cost(fm([[1.0, 0.0]]), fm([[0.0, 1.0]]))
        assert cost.value == 1.0
        assert cost.path_length == 1

    def test_symmetry(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            a = random_feature_matrix(rng, int(rng.integers(1, 7)), 3)
            b = random_feature_matrix(rng, int(rng.integers(1, 7)), 3)
            assert dtw_cost(a, b).value == dtw_cost(b, a).value

    def test_matches_brute_force(self):
        rng = np.random.default_rng(23)
        for _ in range(300):
            a = random_feature_matrix(rng, int(rng.integers(1, 7)), int(rng.integers(1, 5)))
            b = random_feature_matrix(rng, int(rng.integers(1, 7)), a.dims)
            got = dtw_cost(a, b)
            want = brute_force_dtw_value(a.data, b.data)
            assert got.value == pytest.approx(want, abs=1e-9)

    def test_path_length_matches_brute_force_on_unique_optimum(self):
        rng = np.random.default_rng(29)
        for _ in range(100):
            a = random_feature_matrix(rng, 4, 3)
            b = random_feature_matrix(rng, 5, 3)
            got = dtw_cost(a, b)
            _, length = brute_force_dtw(cosine_grid_reference(a.data, b.data))
            assert got.path_length == length
            assert got.path_length >= max(a.frames, b.frames)

    def test_scale_invariance(self):
        rng = np.random.default_rng(37)
        for _ in range(50):
            a = random_feature_matrix(rng, 5, 3)
            b = random_feature_matrix(rng, 4, 3)
            base = dtw_cost(a, b).value
            sa = rng.uniform(0.1, 10.0, size=(a.frames, 1))
            sb = rng.uniform(0.1, 10.0, size=(b.frames, 1))
            scaled = dtw_cost(fm(a.data * sa), fm(b.data * sb)).value
            assert scaled == pytest.approx(base, abs=1e-9)

    def test_dims_mismatch_rejected(self):
        with pytest.raises(ValueError, match="dims mismatch"):
            dtw_cost(fm([[1.0, 0.0]]), fm([[1.0, 0.0, 0.0]]))

    def test_tie_breaking_prefers_diagonal(self):
        # all-equal distance grid: every path costs the same per cell, so the
        # backtracked path must be the pure diagonal
        a = fm([[1.0, 0.0], [1.0, 0.0], [1.0, 0.0]])
        b = fm([[0.0, 1.0], [0.0, 1.0], [0.0, 1.0]])
        cost = dtw_cost(a, b)
        assert cost.value == 1.0
        assert cost.path_length == 3


class TestDelta:
    def test_target_equals_x(self):
        rng = np.random.default_rng(41)
        x = random_feature_matrix(rng, 4, 3)
        other = random_feature_matrix(rng, 4, 3)
        d = delta(x, other, x, triplet_id="t")
        assert d.delta == dtw_cost(other, x).value
        assert d.delta > 0

    def test_antisymmetry_exact(self):
        rng = np.random.default_rng(43)
        for _ in range(100):
            t = random_feature_matrix(rng, int(rng.integers(1, 6)), 3)
            o = random_feature_matrix(rng, int(rng.integers(1, 6)), 3)
            x = random_feature_matrix(rng, int(rng.integers(1, 6)), 3)
            assert delta(t, o, x).delta == -delta(o, t, x).delta

    def test_matches_brute_force(self):
        rng = np.random.default_rng(47)
        for _ in range(100):
            t = random_feature_matrix(rng, 3, 3)
            o = random_feature_matrix(rng, 3, 3)
            x = random_feature_matrix(rng, 3, 3)
            want = brute_force_dtw_value(o.data, x.data) - brute_force_dtw_value(t.data, x.data)
            assert delta(t, o, x).delta == pytest.approx(want, abs=1e-9)
