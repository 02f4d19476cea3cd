"""推定結果のデータ定義

エンジン間で受け渡す純粋なデータクラス（計算ロジックは持たない）。
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from covreg.covreg.core.base.errors import DataError

# |β_k| がこれ以下なら非選択とみなす
ZERO_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class GramSystem:
    """最小二乗損失を評価するための十分統計量

    Attributes:
        gram: Σ_W = {tr(W_k W_l)}、(K+1)×(K+1)
        moments: Σ_WY = {n⁻¹Σᵢ yᵢᵀW_k yᵢ}
        p: 応答の次元
        n: 観測の反復数
        c: n⁻¹Σᵢ(yᵢᵀyᵢ)²
    """

    gram: np.ndarray
    moments: np.ndarray
    p: int
    n: int
    c: float

    def __post_init__(self) -> None:
        gram = np.array(self.gram, dtype=np.float64)
        moments = np.array(self.moments, dtype=np.float64)
        if gram.ndim != 2 or gram.shape[0] != gram.shape[1] or moments.shape != (gram.shape[0],):
            raise DataError(f"inconsistent Gram system shapes: gram {gram.shape}, moments {moments.shape}")
        gram.setflags(write=False)
        moments.setflags(write=False)
        object.__setattr__(self, "gram", gram)
        object.__setattr__(self, "moments", moments)

    @property
    def n_terms(self) -> int:
        """K + 1"""
        return int(self.moments.shape[0])


@dataclass(frozen=True, eq=False)
class Coefficients:
    """回帰係数 β とそのサポート"""

    beta: np.ndarray

    def __post_init__(self) -> None:
        beta = np.array(self.beta, dtype=np.float64).ravel()
        beta.setflags(write=False)
        object.__setattr__(self, "beta", beta)

    @classmethod
    def zeros(cls, n_terms: int) -> Coefficients:
        return cls(np.zeros(n_terms))

    @classmethod
    def from_support(cls, values: Sequence[float] | np.ndarray, support: Sequence[int], n_terms: int) -> Coefficients:
        """サポート上の値を埋めた係数ベクトル"""
        beta = np.zeros(n_terms)
        beta[list(support)] = values
        return cls(beta)

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(int(k) for k in np.flatnonzero(np.abs(self.beta) > ZERO_TOL))

    @property
    def df(self) -> int:
        return len(self.support)


@dataclass(frozen=True, eq=False)
class FitResult:
    """ソルバーの結果と診断情報

    Attributes:
        coefficients: 推定係数
        iterations: 反復回数（LLAでは外側反復数）
        converged: 収束したか
        objective: 目的関数値
        kkt_residual: 最終重みでのKKT残差
        weights: 最終ペナルティ重み（重み付きLassoの場合）
        inner_iterations: 内側の座標降下スイープ総数
    """

    coefficients: Coefficients
    iterations: int
    converged: bool
    objective: float
    kkt_residual: float
    weights: np.ndarray | None = None
    inner_iterations: int = 0
    history: list[float] = field(default_factory=list)

    @property
    def beta(self) -> np.ndarray:
        return self.coefficients.beta

    @property
    def support(self) -> tuple[int, ...]:
        return self.coefficients.support

    def as_record(self) -> dict[str, Any]:
        """シリアライズ用の辞書"""
        return {
            "beta": [float(b) for b in self.beta],
            "support": list(self.support),
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "objective": float(self.objective),
            "kkt_residual": float(self.kkt_residual),
        }
