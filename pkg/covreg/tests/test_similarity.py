"""類似度行列の構築テスト"""

import numpy as np
import pytest

from covreg.covreg.core.base.errors import DataError
from covreg.covreg.core.base.matrices import MatrixKind, SparseSymMatrix, sparse_from_triplets
from covreg.covreg.core.engine.similarity import (
    bernoulli_similarity,
    correlated_similarity,
    edge_similarity,
    indicator_similarity,
    kernel_similarity,
    make_rng,
    outerproduct_similarity,
    rescale_l1,
)


class TestKernelSimilarity:
    """ガウスカーネル類似度"""

    def test_full_density_keeps_every_pair(self):
        x = np.array([0.0, 0.5, 1.0, 2.0])
        w = kernel_similarity(x, bandwidth=2.0)
        dense = w.to_dense()

        assert np.all(np.diag(dense) == 0.0)
        assert w.nnz == 12
        assert dense[0, 1] == pytest.approx(np.exp(-2.0 * 0.25))
        assert dense[1, 3] == pytest.approx(np.exp(-2.0 * 2.25))

    def test_density_threshold_keeps_closest_pairs(self):
        """d² の (density·N) 番目の値より厳密に小さいペアだけ残ること"""
        x = np.array([0.0, 1.0, 2.0, 3.0])
        # d² = 1,4,9,1,4,1 → 昇順 [1,1,1,4,4,9]、density 0.5 → τ = 4
        w = kernel_similarity(x, bandwidth=1.0, density=0.5)
        dense = w.to_dense()

        kept = {(int(i), int(j)) for i, j in zip(w.rows, w.cols)}
        assert kept == {(0, 1), (1, 2), (2, 3)}
        assert dense[0, 1] == pytest.approx(np.exp(-1.0))

    def test_ties_are_not_split(self):
        """τ と同じ距離のペアはすべて落とすこと"""
        x = np.array([0.0, 1.0, 2.0, 3.0])
        # density 1/3 → 2番目 (0始まり) の d² = 1 → d² < 1 のペアはない
        w = kernel_similarity(x, bandwidth=1.0, density=1.0 / 3.0)
        assert w.nnz == 0

    def test_constant_column_with_partial_density(self):
        with pytest.raises(DataError, match="constant"):
            kernel_similarity(np.ones(5), density=0.5)

    def test_constant_column_with_full_density(self):
        w = kernel_similarity(np.ones(4))
        assert np.allclose(w.to_dense(), np.ones((4, 4)) - np.eye(4))

    @pytest.mark.parametrize("density", [0.0, 1.5])
    def test_density_out_of_range(self, density):
        with pytest.raises(DataError, match="density"):
            kernel_similarity(np.arange(4.0), density=density)

    def test_bandwidth_must_be_positive(self):
        with pytest.raises(DataError, match="bandwidth"):
            kernel_similarity(np.arange(4.0), bandwidth=0.0)


def test_outerproduct_similarity_is_scaled_rank_one():
    """外積型は xxᵀ/p のランク1表現であること"""
    x = np.array([1.0, -2.0, 3.0])
    w = outerproduct_similarity(x)

    assert w.kind is MatrixKind.RANK_ONE
    np.testing.assert_allclose(w.to_dense(), np.outer(x, x) / 3.0)


class TestIndicatorSimilarity:
    def test_same_label_pairs(self):
        """同じラベルのペアが1、欠損ラベルはどことも一致しないこと"""
        w = indicator_similarity(["a", "b", "a", None, "b"])
        dense = w.to_dense()

        expected = np.zeros((5, 5))
        for i, j in [(0, 2), (1, 4)]:
            expected[i, j] = expected[j, i] = 1.0
        np.testing.assert_array_equal(dense, expected)

    def test_numeric_labels_compare_by_value(self):
        w = indicator_similarity([0, 1, 1, 0])
        assert w.nnz == 4

    def test_all_distinct_labels_give_zero_matrix(self):
        assert indicator_similarity(["a", "b", "c"]).nnz == 0


class TestEdgeSimilarity:
    def test_duplicate_edges_collapse(self):
        w = edge_similarity([(0, 1), (1, 0), (2, 3)], p=4)
        dense = w.to_dense()
        assert w.nnz == 4
        assert dense[0, 1] == dense[1, 0] == 1.0
        assert dense[2, 3] == 1.0

    def test_self_loop_rejected(self):
        with pytest.raises(DataError, match="self-loop"):
            edge_similarity([(1, 1)], p=3)

    def test_out_of_range_rejected(self):
        with pytest.raises(DataError, match="out of range"):
            edge_similarity([(0, 3)], p=3)

    def test_no_edges(self):
        assert edge_similarity([], p=3).nnz == 0


class TestRescale:
    def test_max_column_abs_sum_becomes_one(self):
        w = sparse_from_triplets([(0, 1, 2.0), (0, 2, -4.0), (1, 2, 1.0)], p=3)
        scaled = rescale_l1(w)
        assert np.max(np.abs(scaled.to_dense()).sum(axis=0)) == pytest.approx(1.0)
        np.testing.assert_allclose(scaled.to_dense(), w.to_dense() / 6.0)

    def test_rank_one_keeps_storage(self):
        scaled = rescale_l1(SparseSymMatrix.rank_one([1.0, 2.0]))
        assert scaled.kind is MatrixKind.RANK_ONE
        assert np.max(np.abs(scaled.to_dense()).sum(axis=0)) == pytest.approx(1.0)

    def test_zero_matrix_rejected(self):
        with pytest.raises(DataError, match="zero"):
            rescale_l1(SparseSymMatrix.zeros(3))


class TestBernoulliSimilarity:
    """Bernoulli ランダム類似度"""

    def test_same_seed_same_matrix(self):
        a = bernoulli_similarity(50, 3.0, 17)
        b = bernoulli_similarity(50, 3.0, 17)
        np.testing.assert_array_equal(a.rows, b.rows)
        np.testing.assert_array_equal(a.cols, b.cols)

    def test_int_seed_equals_philox_generator(self):
        a = bernoulli_similarity(30, 4.0, 5)
        b = bernoulli_similarity(30, 4.0, np.random.Generator(np.random.Philox(5)))
        np.testing.assert_array_equal(a.rows, b.rows)
        np.testing.assert_array_equal(a.cols, b.cols)

    def test_binary_zero_diagonal(self):
        w = bernoulli_similarity(40, 5.0, 2)
        assert np.all(w.values == 1.0)
        assert np.all(w.rows < w.cols)

    def test_mean_degree_close_to_theta(self):
        """既定の分母 p − 1 では辺数の期待値が θp/2 であること"""
        p, theta = 400, 5.0
        counts = [bernoulli_similarity(p, theta, seed).values.size for seed in range(5)]
        assert abs(np.mean(counts) - theta * p / 2) < 100

    def test_probability_must_be_below_one(self):
        with pytest.raises(DataError, match="probability"):
            bernoulli_similarity(5, 4.0, 0)

    def test_make_rng_passes_generator_through(self):
        rng = np.random.default_rng(0)
        assert make_rng(rng) is rng


def test_correlated_similarity_values():
    """x_i x_j exp{−p(x_i − x_j)²}（対角0）"""
    x = np.array([0.5, -1.0, 0.8])
    dense = correlated_similarity(x).to_dense()
    expected = np.outer(x, x) * np.exp(-3.0 * np.subtract.outer(x, x) ** 2)
    np.fill_diagonal(expected, 0.0)
    np.testing.assert_allclose(dense, expected)
