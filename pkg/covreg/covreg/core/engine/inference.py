"""オラクル推定量の漸近共分散と標準化前処理

avar(β̂_S) ≈ (np)⁻¹·G₀⁻¹{2G₁ + (μ₄ − 3)H}G₀⁻¹ を
G₀ = p⁻¹{tr(W_kW_l)}、G₁ = p⁻¹{tr(Σ₀W_kΣ₀W_l)}、
H = p⁻¹{Σ_j (Σ₀^{1/2}W_kΣ₀^{1/2})_jj (Σ₀^{1/2}W_lΣ₀^{1/2})_jj} から計算する。
Σ₀ が正定値でなければ推論は行わない。
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from covreg.covreg.core.base.errors import DataError, NumericalError
from covreg.covreg.core.base.matrices import (
    DenseSymMatrix,
    SimilarityBasis,
    densify,
    symmetric_sqrt,
    trace_product,
)
from covreg.covreg.core.base.models import Coefficients

logger = logging.getLogger(__name__)

GAUSSIAN_MU4 = 3.0
_COND_LIMIT = 1e12


@dataclass(frozen=True, eq=False)
class StandardizedPanel:
    """列ごとに標本平均0・分散1（分母 n）へ標準化したパネル

    Attributes:
        data: n×p 標準化データ
        means: 列平均 Ȳ_j
        sds: 列標準偏差 σ̂_j（分母 n）
    """

    data: np.ndarray
    means: np.ndarray
    sds: np.ndarray


def standardize(panel: np.ndarray) -> StandardizedPanel:
    """Ỹ_ji = (Y_ji − Ȳ_j)/σ̂_j、σ̂_j² = n⁻¹Σᵢ(Y_ji − Ȳ_j)²

    Raises:
        DataError: n < 2、分散0の列
    """
    data = np.asarray(panel, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] < 2:
        raise DataError(f"standardize needs an n x p panel with n >= 2, got shape {data.shape}")
    means = data.mean(axis=0)
    centered = data - means
    sds = np.sqrt(np.mean(centered**2, axis=0))
    constant = np.flatnonzero(sds == 0.0)
    if constant.size:
        raise DataError(f"zero-variance column at index {int(constant[0])}")
    return StandardizedPanel(data=centered / sds, means=means, sds=sds)


def destandardize(sigma: DenseSymMatrix, sds: Sequence[float] | np.ndarray) -> DenseSymMatrix:
    """標準化スケールの共分散を元のスケールへ戻す（D Σ D、D = diag(σ̂_j)）"""
    scale = np.asarray(sds, dtype=np.float64)
    if scale.shape != (sigma.dim,):
        raise DataError(f"scale length {scale.shape} does not match covariance dimension {sigma.dim}")
    return DenseSymMatrix.symmetrized(sigma.data * np.outer(scale, scale))


@dataclass(frozen=True, eq=False)
class AsymptoticCovariance:
    """漸近共分散の構成要素

    Attributes:
        g0: p⁻¹{tr(W_kW_l)}
        g1: p⁻¹{tr(Σ₀W_kΣ₀W_l)}
        h: p⁻¹ Σ_j diag(M_k)_j diag(M_l)_j
        mu4: Z の4次モーメント
        avar: 漸近共分散
        support: 対応する係数インデックス
    """

    g0: np.ndarray
    g1: np.ndarray
    h: np.ndarray
    mu4: float
    avar: np.ndarray
    support: tuple[int, ...] = ()

    @property
    def standard_errors(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.avar), 0.0, None))


def sandwich_covariance(
    basis: SimilarityBasis,
    sigma0: DenseSymMatrix,
    mu4: float = GAUSSIAN_MU4,
    n: int = 1,
    support: Sequence[int] = (),
) -> AsymptoticCovariance:
    """制限基底 {W_k : k ∈ S} に対する漸近共分散

    Args:
        basis: サポート上に制限した基底
        sigma0: 真の（またはプラグインの）共分散
        mu4: Z の4次モーメント（ガウスなら3）
        n: 観測の反復数（共分散を 1/n 倍）
        support: 結果に記録する係数インデックス

    Raises:
        DataError: 次元不一致、n < 1
        NumericalError: Σ₀ が非正定値、G₀ が特異
    """
    p = basis.dim
    if sigma0.dim != p:
        raise DataError(f"sigma0 dimension {sigma0.dim} does not match basis dimension {p}")
    if n < 1:
        raise DataError(f"n must be positive, got {n}")
    root = symmetric_sqrt(sigma0)
    size = basis.n_terms

    g0 = np.empty((size, size))
    for k in range(size):
        for l in range(k, size):
            g0[k, l] = g0[l, k] = trace_product(basis[k], basis[l]) / p
    cond = np.linalg.cond(g0)
    if not np.isfinite(cond) or cond > _COND_LIMIT:
        raise NumericalError(f"G0 is singular (condition number {cond:.3e})")

    sandwiched = [root @ w_k.to_dense() @ root for w_k in basis.matrices]
    diagonals = np.array([np.diag(m_k) for m_k in sandwiched])
    g1 = np.empty((size, size))
    for k in range(size):
        for l in range(k, size):
            g1[k, l] = g1[l, k] = float(np.sum(sandwiched[k] * sandwiched[l])) / p
    h = diagonals @ diagonals.T / p

    g0_inv = scipy.linalg.inv(g0)
    avar = g0_inv @ (2.0 * g1 + (mu4 - GAUSSIAN_MU4) * h) @ g0_inv / (p * n)
    return AsymptoticCovariance(
        g0=g0,
        g1=g1,
        h=h,
        mu4=float(mu4),
        avar=(avar + avar.T) / 2.0,
        support=tuple(int(k) for k in support),
    )


def estimate_mu4(observations: np.ndarray, sigma: DenseSymMatrix) -> float:
    """白色化スコア z = Σ^{-1/2}y の全要素の4次モーメント

    Raises:
        NumericalError: Σ が非正定値
    """
    obs = np.atleast_2d(np.asarray(observations, dtype=np.float64))
    if obs.shape[1] != sigma.dim:
        raise DataError(f"observation width {obs.shape[1]} does not match covariance dimension {sigma.dim}")
    root = symmetric_sqrt(sigma)
    scores = scipy.linalg.solve(root, obs.T, assume_a="pos")
    return float(np.mean(scores**4))


def plugin_standard_errors(
    basis: SimilarityBasis,
    coefficients: Coefficients,
    observations: np.ndarray,
    mu4: float | None = GAUSSIAN_MU4,
) -> AsymptoticCovariance:
    """Σ₀ を Σ(β̂) で置き換えたプラグイン標準誤差（選択サポート上）

    真の Σ₀ ではなく推定値を使うヒューリスティック。mu4=None なら観測から推定する。

    Raises:
        DataError: サポートが空
        NumericalError: Σ(β̂) が非正定値
    """
    support = coefficients.support
    if not support:
        raise DataError("cannot compute standard errors for an empty support")
    obs = np.atleast_2d(np.asarray(observations, dtype=np.float64))
    sigma = densify(basis, coefficients.beta)
    fourth = estimate_mu4(obs, sigma) if mu4 is None else float(mu4)
    logger.debug("plug-in inference on support %s (mu4=%.4f)", support, fourth)
    return sandwich_covariance(basis.restrict(support), sigma, fourth, obs.shape[0], support)
