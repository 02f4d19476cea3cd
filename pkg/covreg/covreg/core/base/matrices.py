"""対称行列表現とトレース/二次形式カーネル

類似度行列 W_k を3種類のストレージ（上三角トリプレット / ランク1 / 単位行列）で保持し、
Gram系の組み立てに必要な tr(W_k W_l) と yᵀW_k y をストレージに応じた経路で計算する。
p×p の密行列を作るのは densify と検証用の to_dense のみ。
"""

from __future__ import annotations

from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from enum import StrEnum
from pathlib import Path

import numpy as np
import scipy.linalg

from covreg.covreg.core.base.errors import DataError, NumericalError

SYMMETRY_RTOL = 1e-12


class MatrixKind(StrEnum):
    """SparseSymMatrixのストレージ種別"""

    TRIPLETS = "triplets"
    RANK_ONE = "rank_one"
    IDENTITY = "identity"


# trace_product で引数順を正規化するための順位
_KIND_RANK = {MatrixKind.IDENTITY: 0, MatrixKind.RANK_ONE: 1, MatrixKind.TRIPLETS: 2}


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class SparseSymMatrix:
    """対称 p×p 類似度行列

    Attributes:
        dim: 次元 p
        kind: ストレージ種別
        rows: 上三角トリプレットの行インデックス（i ≤ j、辞書順ソート済み）
        cols: 上三角トリプレットの列インデックス
        values: トリプレットの値（有限かつ非ゼロ）
        vector: ランク1表現 c·xxᵀ の x
        scale: ランク1 / 単位行列表現のスケール c
    """

    dim: int
    kind: MatrixKind
    rows: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    cols: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    values: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.float64))
    vector: np.ndarray | None = None
    scale: float = 1.0

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise DataError(f"matrix dimension must be positive, got {self.dim}")
        object.__setattr__(self, "rows", _frozen(np.asarray(self.rows, dtype=np.int64)))
        object.__setattr__(self, "cols", _frozen(np.asarray(self.cols, dtype=np.int64)))
        object.__setattr__(self, "values", _frozen(np.asarray(self.values, dtype=np.float64)))
        if self.vector is not None:
            object.__setattr__(self, "vector", _frozen(np.asarray(self.vector, dtype=np.float64)))
        if self.kind is MatrixKind.RANK_ONE and (self.vector is None or self.vector.shape != (self.dim,)):
            raise DataError(f"rank-one matrix needs a vector of length {self.dim}")
        if not np.isfinite(self.scale):
            raise DataError(f"non-finite scale: {self.scale}")

    @classmethod
    def identity(cls, p: int, scale: float = 1.0) -> SparseSymMatrix:
        """c·I_p"""
        return cls(dim=p, kind=MatrixKind.IDENTITY, scale=float(scale))

    @classmethod
    def rank_one(cls, x: Sequence[float] | np.ndarray, scale: float = 1.0) -> SparseSymMatrix:
        """c·xxᵀ"""
        vec = np.asarray(x, dtype=np.float64)
        if vec.ndim != 1 or not np.all(np.isfinite(vec)):
            raise DataError("rank-one vector must be a finite 1-D array")
        return cls(dim=vec.shape[0], kind=MatrixKind.RANK_ONE, vector=vec, scale=float(scale))

    @classmethod
    def zeros(cls, p: int) -> SparseSymMatrix:
        """ゼロ行列（空トリプレット）"""
        return cls(dim=p, kind=MatrixKind.TRIPLETS)

    @property
    def nnz(self) -> int:
        """非ゼロ要素数（非対角は2回数える）"""
        if self.kind is MatrixKind.IDENTITY:
            return self.dim if self.scale != 0.0 else 0
        if self.kind is MatrixKind.RANK_ONE:
            assert self.vector is not None
            return int(np.count_nonzero(self.vector)) ** 2 if self.scale != 0.0 else 0
        off_diagonal = int(np.count_nonzero(self.rows != self.cols))
        return 2 * off_diagonal + (self.rows.shape[0] - off_diagonal)

    def diagonal(self) -> np.ndarray:
        if self.kind is MatrixKind.IDENTITY:
            return np.full(self.dim, self.scale)
        if self.kind is MatrixKind.RANK_ONE:
            assert self.vector is not None
            return self.scale * self.vector**2
        diag = np.zeros(self.dim)
        on_diag = self.rows == self.cols
        diag[self.rows[on_diag]] = self.values[on_diag]
        return diag

    def trace(self) -> float:
        return float(np.sum(self.diagonal()))

    def to_dense(self) -> np.ndarray:
        """密行列へ展開（検証・小規模計算用）"""
        if self.kind is MatrixKind.IDENTITY:
            return self.scale * np.eye(self.dim)
        if self.kind is MatrixKind.RANK_ONE:
            assert self.vector is not None
            return self.scale * np.outer(self.vector, self.vector)
        dense = np.zeros((self.dim, self.dim))
        dense[self.rows, self.cols] = self.values
        dense[self.cols, self.rows] = self.values
        return dense

    def scaled(self, factor: float) -> SparseSymMatrix:
        """factor倍した行列を返す"""
        if self.kind is MatrixKind.TRIPLETS:
            return triplets_from_arrays(self.rows, self.cols, self.values * factor, self.dim)
        return SparseSymMatrix(
            dim=self.dim, kind=self.kind, vector=self.vector, scale=self.scale * float(factor)
        )

    def column_abs_sums(self) -> np.ndarray:
        """各列の絶対値和"""
        if self.kind is MatrixKind.IDENTITY:
            return np.full(self.dim, abs(self.scale))
        if self.kind is MatrixKind.RANK_ONE:
            assert self.vector is not None
            magnitude = np.abs(self.vector)
            return abs(self.scale) * magnitude * float(np.sum(magnitude))
        magnitude = np.abs(self.values)
        off = self.rows != self.cols
        sums = np.bincount(self.cols, weights=magnitude, minlength=self.dim)
        sums += np.bincount(self.rows[off], weights=magnitude[off], minlength=self.dim)
        return sums


@dataclass(frozen=True, eq=False)
class DenseSymMatrix:
    """密な対称行列（Σ(β), Σ₀ 等）"""

    data: np.ndarray

    def __post_init__(self) -> None:
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2 or data.shape[0] != data.shape[1]:
            raise DataError(f"dense symmetric matrix must be square, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise DataError("dense symmetric matrix has non-finite entries")
        bound = SYMMETRY_RTOL * max(1.0, float(np.max(np.abs(data), initial=0.0)))
        if np.max(np.abs(data - data.T), initial=0.0) > bound:
            raise DataError("matrix is not symmetric within tolerance")
        object.__setattr__(self, "data", _frozen(data))

    @classmethod
    def symmetrized(cls, data: np.ndarray) -> DenseSymMatrix:
        """(A + Aᵀ)/2 で丸め誤差由来の非対称性を除去して構築"""
        arr = np.asarray(data, dtype=np.float64)
        return cls((arr + arr.T) / 2.0)

    @property
    def dim(self) -> int:
        return int(self.data.shape[0])


@dataclass(frozen=True, eq=False)
class SimilarityBasis:
    """回帰設計 {W₀ = I_p, W₁, …, W_K}

    Attributes:
        matrices: 順序付きの類似度行列
        allow_non_identity_first: 先頭が単位行列でない基底を明示的に許可する
    """

    matrices: tuple[SparseSymMatrix, ...]
    allow_non_identity_first: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "matrices", tuple(self.matrices))
        if not self.matrices:
            raise DataError("similarity basis is empty")
        dims = {m.dim for m in self.matrices}
        if len(dims) != 1:
            raise DataError(f"similarity matrices have different dimensions: {sorted(dims)}")
        if not self.allow_non_identity_first and self.matrices[0].kind is not MatrixKind.IDENTITY:
            raise DataError("basis index 0 must be the identity matrix")

    @classmethod
    def with_identity(cls, matrices: Iterable[SparseSymMatrix], p: int) -> SimilarityBasis:
        """I_p を先頭に付けた基底"""
        return cls((SparseSymMatrix.identity(p), *matrices))

    @property
    def dim(self) -> int:
        return self.matrices[0].dim

    @property
    def n_terms(self) -> int:
        """K + 1"""
        return len(self.matrices)

    def __len__(self) -> int:
        return len(self.matrices)

    def __getitem__(self, index: int) -> SparseSymMatrix:
        return self.matrices[index]

    def restrict(self, indices: Sequence[int]) -> SimilarityBasis:
        """指定インデックスの部分基底"""
        return SimilarityBasis(tuple(self.matrices[i] for i in indices), allow_non_identity_first=True)


def triplets_from_arrays(
    rows: np.ndarray,
    cols: np.ndarray,
    values: np.ndarray,
    p: int,
    zero_diagonal: bool = False,
) -> SparseSymMatrix:
    """配列形式のトリプレットを正規形（上三角・ソート・重複和）に変換"""
    rows = np.asarray(rows, dtype=np.int64).ravel()
    cols = np.asarray(cols, dtype=np.int64).ravel()
    values = np.asarray(values, dtype=np.float64).ravel()
    if not rows.shape == cols.shape == values.shape:
        raise DataError("triplet arrays have different lengths")
    if rows.size and (rows.min() < 0 or cols.min() < 0 or rows.max() >= p or cols.max() >= p):
        raise DataError(f"triplet index out of range for dimension {p}")
    if not np.all(np.isfinite(values)):
        raise DataError("triplet values must be finite")
    if zero_diagonal and np.any(rows == cols):
        bad = int(np.flatnonzero(rows == cols)[0])
        raise DataError(f"diagonal entry ({rows[bad]}, {cols[bad]}) not allowed with zero_diagonal")

    low = np.minimum(rows, cols)
    high = np.maximum(rows, cols)
    keys, inverse = np.unique(low * p + high, return_inverse=True)
    merged = np.bincount(inverse, weights=values, minlength=keys.shape[0])
    keep = merged != 0.0
    keys = keys[keep]
    return SparseSymMatrix(
        dim=p,
        kind=MatrixKind.TRIPLETS,
        rows=keys // p,
        cols=keys % p,
        values=merged[keep],
    )


def sparse_from_triplets(
    entries: Iterable[tuple[int, int, float]],
    p: int,
    zero_diagonal: bool = False,
) -> SparseSymMatrix:
    """(i, j, value) のリストから SparseSymMatrix を構築

    i > j の要素は上三角へ折り返し、重複は和でまとめる。

    Args:
        entries: (i, j, value) のリスト
        p: 次元
        zero_diagonal: 対角要素を禁止する

    Returns:
        SparseSymMatrix: 正規形のトリプレット行列

    Raises:
        DataError: インデックス範囲外、対角禁止違反、非有限値
    """
    triples = list(entries)
    if not triples:
        return SparseSymMatrix.zeros(p)
    rows, cols, values = zip(*triples, strict=True)
    return triplets_from_arrays(np.array(rows), np.array(cols), np.array(values, dtype=np.float64), p, zero_diagonal)


def _check_same_dim(a: SparseSymMatrix, b: SparseSymMatrix) -> None:
    if a.dim != b.dim:
        raise DataError(f"dimension mismatch: {a.dim} vs {b.dim}")


def trace_product(a: SparseSymMatrix, b: SparseSymMatrix) -> float:
    """tr(AB) = Σ_ij A_ij B_ij

    ストレージ種別ごとの高速経路を使う。引数順を正規化するため
    trace_product(A, B) と trace_product(B, A) は完全に一致する。

    Raises:
        DataError: 次元不一致
    """
    _check_same_dim(a, b)
    if _KIND_RANK[a.kind] > _KIND_RANK[b.kind]:
        a, b = b, a

    if a.kind is MatrixKind.IDENTITY:
        return a.scale * b.trace()
    if a.kind is MatrixKind.RANK_ONE:
        assert a.vector is not None
        if b.kind is MatrixKind.RANK_ONE:
            assert b.vector is not None
            inner = float(np.sum(a.vector * b.vector))
            return a.scale * b.scale * inner * inner
        return a.scale * quad_form(b, a.vector)

    key_a = a.rows * a.dim + a.cols
    key_b = b.rows * b.dim + b.cols
    _, idx_a, idx_b = np.intersect1d(key_a, key_b, assume_unique=True, return_indices=True)
    multiplicity = np.where(a.rows[idx_a] == a.cols[idx_a], 1.0, 2.0)
    return float(np.sum(multiplicity * (a.values[idx_a] * b.values[idx_b])))


def quad_forms(a: SparseSymMatrix, observations: np.ndarray) -> np.ndarray:
    """各行 y_i について y_iᵀ A y_i を計算

    Args:
        a: 類似度行列
        observations: n×p 観測行列

    Returns:
        長さ n のベクトル
    """
    ys = np.atleast_2d(np.asarray(observations, dtype=np.float64))
    if ys.shape[1] != a.dim:
        raise DataError(f"dimension mismatch: observation width {ys.shape[1]} vs matrix {a.dim}")
    if a.kind is MatrixKind.IDENTITY:
        return a.scale * np.einsum("ij,ij->i", ys, ys)
    if a.kind is MatrixKind.RANK_ONE:
        assert a.vector is not None
        projected = ys @ a.vector
        return a.scale * projected * projected
    if a.values.size == 0:
        return np.zeros(ys.shape[0])
    weights = np.where(a.rows == a.cols, 1.0, 2.0) * a.values
    return (ys[:, a.rows] * ys[:, a.cols]) @ weights


def quad_form(a: SparseSymMatrix, y: Sequence[float] | np.ndarray) -> float:
    """yᵀAy

    Raises:
        DataError: 次元不一致
    """
    vec = np.asarray(y, dtype=np.float64)
    if vec.ndim != 1:
        raise DataError("quad_form expects a 1-D vector")
    return float(quad_forms(a, vec[np.newaxis, :])[0])


def densify(basis: SimilarityBasis, beta: Sequence[float] | np.ndarray) -> DenseSymMatrix:
    """Σ(β) = Σ_k β_k W_k を密行列として返す

    Raises:
        DataError: len(beta) != K+1
    """
    coef = np.asarray(beta, dtype=np.float64)
    if coef.shape != (basis.n_terms,):
        raise DataError(f"coefficient length {coef.shape} does not match basis size {basis.n_terms}")
    p = basis.dim
    out = np.zeros((p, p))
    diag = np.arange(p)
    for b_k, w_k in zip(coef, basis.matrices, strict=True):
        if b_k == 0.0:
            continue
        if w_k.kind is MatrixKind.IDENTITY:
            out[diag, diag] += b_k * w_k.scale
        elif w_k.kind is MatrixKind.RANK_ONE:
            assert w_k.vector is not None
            out += (b_k * w_k.scale) * np.outer(w_k.vector, w_k.vector)
        else:
            off = w_k.rows != w_k.cols
            out[w_k.rows, w_k.cols] += b_k * w_k.values
            out[w_k.cols[off], w_k.rows[off]] += b_k * w_k.values[off]
    return DenseSymMatrix(out)


def symmetric_sqrt(sigma: DenseSymMatrix | np.ndarray) -> np.ndarray:
    """対称固有値分解による Σ^{1/2}

    Raises:
        NumericalError: Σ が正定値でない
    """
    data = sigma.data if isinstance(sigma, DenseSymMatrix) else np.asarray(sigma, dtype=np.float64)
    eigvals, eigvecs = scipy.linalg.eigh(data)
    if eigvals[0] <= 0.0:
        raise NumericalError(f"matrix is not positive definite (min eigenvalue {eigvals[0]:.3e})")
    root = (eigvecs * np.sqrt(eigvals)) @ eigvecs.T
    return (root + root.T) / 2.0


def read_triplets(path: str | Path, p: int, zero_diagonal: bool = False) -> SparseSymMatrix:
    """トリプレットファイル（`i j value`、0始まり、`#`コメント）を読み込み

    Raises:
        DataError: ファイルなし、行形式の不正
    """
    path_obj = Path(path)
    if not path_obj.exists():
        raise DataError(f"File not found: {path}")
    entries: list[tuple[int, int, float]] = []
    with open(path_obj) as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 3:
                raise DataError(f"{path_obj.name}:{lineno}: expected 'i j value', got {raw.strip()!r}")
            try:
                entries.append((int(parts[0]), int(parts[1]), float(parts[2])))
            except ValueError as exc:
                raise DataError(f"{path_obj.name}:{lineno}: {exc}") from exc
    return sparse_from_triplets(entries, p, zero_diagonal=zero_diagonal)
