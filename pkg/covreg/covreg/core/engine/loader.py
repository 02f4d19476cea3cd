"""入力データのロードと類似度基底の構築

CSVはpandasで文字列として読み込み、不正セルを (行, 列) の位置付きで報告してから
panderaスキーマ（float・非欠損・有限）で検証する。行・列番号は1始まりで、
行はヘッダを除いたデータ行を数える。
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

import networkx as nx
import numpy as np
import pandas as pd
import pandera.pandas as pa

from covreg.covreg.core.base.errors import DataError
from covreg.covreg.core.base.matrices import SimilarityBasis, SparseSymMatrix, read_triplets
from covreg.covreg.core.engine.config_model import RunConfig
from covreg.covreg.core.engine.similarity import (
    correlated_similarity,
    edge_similarity,
    indicator_similarity,
    kernel_similarity,
    outerproduct_similarity,
    rescale_l1,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Panel:
    """数値CSVの内容

    Attributes:
        values: 行 × 列の数値行列
        names: 列名（ヘッダ順）
    """

    values: np.ndarray
    names: list[str]

    @property
    def shape(self) -> tuple[int, int]:
        return (int(self.values.shape[0]), int(self.values.shape[1]))


def _build_panel_schema(columns: Sequence[str]) -> pa.DataFrameSchema:
    """ヘッダから数値パネルのPanderaスキーマを構築"""
    finite = pa.Check(lambda s: np.isfinite(s), error="values must be finite")
    return pa.DataFrameSchema(
        {name: pa.Column(float, checks=finite, nullable=False) for name in columns},
        strict=True,
    )


def _read_raw(path: Path) -> pd.DataFrame:
    if not path.exists():
        raise DataError(f"File not found: {path}")
    try:
        return pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except pd.errors.EmptyDataError as exc:
        raise DataError(f"{path.name}: empty file") from exc
    except pd.errors.ParserError as exc:
        raise DataError(f"{path.name}: ragged rows: {exc}") from exc


def load_panel(path: str | Path) -> Panel:
    """ヘッダ付き数値CSVを読み込む（列順を保持）

    Raises:
        DataError: ファイルなし、データ行なし、列数不一致、非数値・非有限セル
    """
    path_obj = Path(path)
    raw = _read_raw(path_obj)
    if raw.shape[0] == 0:
        raise DataError(f"{path_obj.name}: no data rows")

    missing = raw.isna().to_numpy()
    if missing.any():
        row = int(np.flatnonzero(missing.any(axis=1))[0])
        raise DataError(f"{path_obj.name}: ragged row {row + 1}: expected {raw.shape[1]} fields")

    numeric = raw.apply(lambda col: pd.to_numeric(col, errors="coerce"))
    bad = numeric.isna().to_numpy()
    if bad.any():
        row, col = (int(v) for v in np.argwhere(bad)[0])
        raise DataError(f"{path_obj.name}: non-numeric cell {raw.iat[row, col]!r} at ({row + 1}, {col + 1})")

    frame = numeric.astype(float)
    try:
        _build_panel_schema(list(frame.columns)).validate(frame, lazy=True)
    except pa.errors.SchemaErrors as exc:
        cases = exc.failure_cases
        first = cases.iloc[0]
        col = int(frame.columns.get_loc(first["column"])) + 1
        row = int(first["index"]) + 1 if pd.notna(first["index"]) else 0
        raise DataError(f"{path_obj.name}: invalid value {first['failure_case']!r} at ({row}, {col})") from exc
    return Panel(values=frame.to_numpy(), names=[str(c) for c in frame.columns])


def _subject_positions(subjects: pd.Series, names: Sequence[str], p: int, source: str) -> np.ndarray:
    """subject 列を主体位置（0始まり）に変換。名前一致を優先し、次に整数インデックス"""
    index = {name: i for i, name in enumerate(names)}
    as_text = subjects.astype(str).str.strip()
    if names and as_text.isin(index.keys()).all():
        return as_text.map(index).to_numpy(dtype=np.int64)
    positions = pd.to_numeric(as_text, errors="coerce")
    if positions.isna().any() or not positions.between(0, p - 1).all():
        raise DataError(f"{source}: subjects must be asset names or indices in [0, {p})")
    return positions.to_numpy(dtype=np.int64)


def load_labels(path: str | Path, p: int, names: Sequence[str] = ()) -> list[object]:
    """`subject,label` CSVを主体順のラベル列にする（記載のない主体は欠損）

    Raises:
        DataError: 列数不正、未知の主体
    """
    path_obj = Path(path)
    raw = _read_raw(path_obj)
    if raw.shape[1] != 2:
        raise DataError(f"{path_obj.name}: expected 2 columns (subject,label), got {raw.shape[1]}")
    positions = _subject_positions(raw.iloc[:, 0], names, p, path_obj.name)
    labels: list[object] = [None] * p
    for pos, label in zip(positions, raw.iloc[:, 1], strict=True):
        labels[int(pos)] = label
    return labels


def load_edges(path: str | Path) -> list[tuple[int, int]]:
    """`i j` 辺リスト（0始まり、`#` コメント）

    Raises:
        DataError: ファイルなし、整数でないノード
    """
    path_obj = Path(path)
    if not path_obj.exists():
        raise DataError(f"File not found: {path_obj}")
    try:
        graph = nx.read_edgelist(path_obj, nodetype=int, data=False, comments="#", create_using=nx.Graph)
    except (TypeError, ValueError) as exc:
        raise DataError(f"{path_obj.name}: malformed edge list: {exc}") from exc
    return [(int(i), int(j)) for i, j in graph.edges()]


def load_market_caps(path: str | Path, names: Sequence[str]) -> np.ndarray:
    """`asset,marketcap` CSVを資産順のベクトルにする

    Raises:
        DataError: 列数不正、資産の欠落
    """
    path_obj = Path(path)
    raw = _read_raw(path_obj)
    if raw.shape[1] != 2:
        raise DataError(f"{path_obj.name}: expected 2 columns (asset,marketcap), got {raw.shape[1]}")
    positions = _subject_positions(raw.iloc[:, 0], names, len(names), path_obj.name)
    values = pd.to_numeric(raw.iloc[:, 1], errors="coerce")
    if values.isna().any():
        row = int(np.flatnonzero(values.isna().to_numpy())[0])
        raise DataError(f"{path_obj.name}: non-numeric cell {raw.iat[row, 1]!r} at ({row + 1}, 2)")
    caps = np.full(len(names), np.nan)
    caps[positions] = values.to_numpy(dtype=np.float64)
    if np.isnan(caps).any():
        missing = names[int(np.flatnonzero(np.isnan(caps))[0])]
        raise DataError(f"{path_obj.name}: no market cap for asset '{missing}'")
    return caps


@dataclass(frozen=True, eq=False)
class BasisDesign:
    """類似度基底と各項の名前（先頭は単位行列）"""

    basis: SimilarityBasis
    terms: list[str]


def _covariate_terms(config: RunConfig, p: int) -> list[tuple[str, SparseSymMatrix]]:
    if config.data.covariates is None:
        return []
    covariates = load_panel(config.data.covariates)
    if covariates.shape[0] != p:
        raise DataError(f"covariates have {covariates.shape[0]} subjects but the panel has p = {p}")
    opts = config.basis
    terms: list[tuple[str, SparseSymMatrix]] = []
    for j, name in enumerate(covariates.names):
        column = covariates.values[:, j]
        if opts.kernel:
            terms.append((f"kernel:{name}", kernel_similarity(column, opts.bandwidth, opts.density)))
        if opts.outerproduct:
            terms.append((f"outer:{name}", outerproduct_similarity(column)))
        if opts.correlated:
            terms.append((f"correlated:{name}", correlated_similarity(column)))
    return terms


def build_design(config: RunConfig, p: int, names: Sequence[str] = ()) -> BasisDesign:
    """共変量・ラベル・辺・トリプレットから基底を組み立てる

    単位行列を先頭に置き、共変量ごとのカーネル / 外積 / 相関型行列、
    ラベル指示行列、辺行列、トリプレット行列の順に並べる。
    rescale が有効なら各行列を ‖W‖₁ = 1 に正規化し、ゼロ行列は警告して除く。

    Raises:
        DataError: 入力間で p が一致しない
    """
    terms = _covariate_terms(config, p)
    for path in config.data.labels:
        terms.append((f"label:{Path(path).stem}", indicator_similarity(load_labels(path, p, names))))
    for path in config.data.edges:
        terms.append((f"edge:{Path(path).stem}", edge_similarity(load_edges(path), p)))
    for path in config.data.triplets:
        terms.append((f"triplets:{Path(path).stem}", read_triplets(path, p)))

    kept: list[tuple[str, SparseSymMatrix]] = []
    for label, matrix in terms:
        if matrix.nnz == 0:
            logger.warning("similarity matrix '%s' is zero; dropped from the basis", label)
            continue
        kept.append((label, rescale_l1(matrix) if config.basis.rescale else matrix))
    basis = SimilarityBasis.with_identity([m for _, m in kept], p)
    logger.info("basis built with K = %d similarity matrices", basis.n_terms - 1)
    return BasisDesign(basis=basis, terms=["identity", *(label for label, _ in kept)])


def build_basis(config: RunConfig, p: int, names: Sequence[str] = ()) -> SimilarityBasis:
    """build_design の基底だけを返す"""
    return build_design(config, p, names).basis
