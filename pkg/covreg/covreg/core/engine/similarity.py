"""類似度行列の構築

共変量（カーネル / 外積 / 相関型）、カテゴリラベル、ネットワーク辺、
ランダムモデル（Bernoulli）から W_k を作る。外積型以外は対角を0にする。
"""

from __future__ import annotations

from collections.abc import Hashable, Iterable, Sequence

import networkx as nx
import numpy as np
import pandas as pd

from covreg.covreg.core.base.errors import DataError
from covreg.covreg.core.base.matrices import SparseSymMatrix, triplets_from_arrays

DEFAULT_BANDWIDTH = 10.0

# density·N の丸め誤差吸収（1/3 · 3 = 0.999… を 1 に）
_COUNT_EPS = 1e-9


def _as_column(x: Sequence[float] | np.ndarray) -> np.ndarray:
    column = np.asarray(x, dtype=np.float64)
    if column.ndim != 1:
        raise DataError(f"covariate column must be 1-D, got shape {column.shape}")
    if column.shape[0] < 2:
        raise DataError(f"covariate column needs at least 2 subjects, got {column.shape[0]}")
    if not np.all(np.isfinite(column)):
        raise DataError("covariate column has non-finite values")
    return column


def make_rng(rng_seed: int | np.random.Generator) -> np.random.Generator:
    """シードから計数型（Philox）乱数生成器を作る。Generatorはそのまま返す"""
    if isinstance(rng_seed, np.random.Generator):
        return rng_seed
    return np.random.Generator(np.random.Philox(int(rng_seed)))


def kernel_similarity(
    x: Sequence[float] | np.ndarray,
    bandwidth: float = DEFAULT_BANDWIDTH,
    density: float = 1.0,
) -> SparseSymMatrix:
    """ガウスカーネル類似度 exp{−bandwidth·(x_i − x_j)²}

    全 p(p−1)/2 ペアの d² を昇順に並べ、m = ⌊density·N⌋ 番目の値 τ より
    厳密に小さいペアだけを残す（同順位は分割しない）。

    Args:
        x: 共変量列
        bandwidth: 正のバンド幅
        density: 残すペアの割合の上限 (0, 1]

    Returns:
        SparseSymMatrix: 対角0のトリプレット行列

    Raises:
        DataError: density が範囲外、bandwidth ≤ 0、density < 1 で定数列
    """
    column = _as_column(x)
    if not 0.0 < density <= 1.0:
        raise DataError(f"density must be in (0, 1], got {density}")
    if not bandwidth > 0.0:
        raise DataError(f"bandwidth must be positive, got {bandwidth}")
    p = column.shape[0]
    rows, cols = np.triu_indices(p, k=1)
    dist2 = (column[rows] - column[cols]) ** 2

    if density < 1.0:
        if np.ptp(column) == 0.0:
            raise DataError("constant covariate column: kernel threshold is undefined for density < 1")
        n_pairs = dist2.shape[0]
        count = min(int(np.floor(density * n_pairs + _COUNT_EPS)), n_pairs - 1)
        threshold = np.sort(dist2)[count]
        keep = dist2 < threshold
        rows, cols, dist2 = rows[keep], cols[keep], dist2[keep]

    return triplets_from_arrays(rows, cols, np.exp(-bandwidth * dist2), p)


def outerproduct_similarity(x: Sequence[float] | np.ndarray) -> SparseSymMatrix:
    """xxᵀ/p（ランク1表現、対角を保持）"""
    column = _as_column(x)
    return SparseSymMatrix.rank_one(column, scale=1.0 / column.shape[0])


def indicator_similarity(labels: Sequence[Hashable] | pd.Series) -> SparseSymMatrix:
    """同じラベルを持つ主体ペアを1とする類似度

    欠損ラベルはどの主体とも一致しない。
    """
    series = pd.Series(list(labels) if not isinstance(labels, pd.Series) else labels.to_numpy())
    p = series.shape[0]
    if p < 2:
        raise DataError(f"label list needs at least 2 subjects, got {p}")
    row_parts: list[np.ndarray] = []
    col_parts: list[np.ndarray] = []
    for members in series.groupby(series, sort=True).indices.values():
        if members.shape[0] < 2:
            continue
        a, b = np.triu_indices(members.shape[0], k=1)
        row_parts.append(members[a])
        col_parts.append(members[b])
    if not row_parts:
        return SparseSymMatrix.zeros(p)
    rows = np.concatenate(row_parts)
    cols = np.concatenate(col_parts)
    return triplets_from_arrays(rows, cols, np.ones(rows.shape[0]), p)


def edge_similarity(edges: Iterable[tuple[int, int]], p: int) -> SparseSymMatrix:
    """無向辺リストの二値類似度（重複辺は1本に集約）

    Raises:
        DataError: 自己ループ、範囲外インデックス
    """
    graph = nx.Graph()
    graph.add_nodes_from(range(p))
    for i, j in edges:
        i, j = int(i), int(j)
        if i == j:
            raise DataError(f"self-loop ({i}, {j}) in edge list")
        if not (0 <= i < p and 0 <= j < p):
            raise DataError(f"edge ({i}, {j}) out of range for p = {p}")
        graph.add_edge(i, j)
    if graph.number_of_edges() == 0:
        return SparseSymMatrix.zeros(p)
    pairs = np.array(list(graph.edges()), dtype=np.int64)
    return triplets_from_arrays(pairs[:, 0], pairs[:, 1], np.ones(pairs.shape[0]), p)


def rescale_l1(w: SparseSymMatrix) -> SparseSymMatrix:
    """最大列絶対値和 ‖W‖₁ で割って ‖W‖₁ = 1 にする

    Raises:
        DataError: ゼロ行列
    """
    norm = float(np.max(w.column_abs_sums(), initial=0.0))
    if norm == 0.0:
        raise DataError("cannot rescale a zero similarity matrix")
    return w.scaled(1.0 / norm)


def bernoulli_similarity(
    p: int,
    theta: float,
    rng_seed: int | np.random.Generator,
    denominator: float | None = None,
) -> SparseSymMatrix:
    """上三角の各非対角要素を独立に確率 θ/denominator で1にする

    乱数は上三角を行優先で消費する。denominator の既定は p − 1（平均次数 θ）。

    Raises:
        DataError: θ < 0 または成功確率 ≥ 1
    """
    if p < 2:
        raise DataError(f"p must be at least 2, got {p}")
    scale = float(p - 1) if denominator is None else float(denominator)
    probability = float(theta) / scale
    if theta < 0.0 or probability >= 1.0:
        raise DataError(f"edge probability must be in [0, 1), got {probability}")
    rng = make_rng(rng_seed)
    rows, cols = np.triu_indices(p, k=1)
    hits = rng.random(rows.shape[0]) < probability
    return triplets_from_arrays(rows[hits], cols[hits], np.ones(int(hits.sum())), p)


def correlated_similarity(x: Sequence[float] | np.ndarray) -> SparseSymMatrix:
    """x_i x_j · exp{−p (x_i − x_j)²}（符号付き、対角0）"""
    column = _as_column(x)
    p = column.shape[0]
    rows, cols = np.triu_indices(p, k=1)
    values = column[rows] * column[cols] * np.exp(-p * (column[rows] - column[cols]) ** 2)
    return triplets_from_arrays(rows, cols, values, p)
