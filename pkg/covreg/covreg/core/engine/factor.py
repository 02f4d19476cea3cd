"""ファクターモデル・ファクター複合モデルの共分散と Ledoit–Wolf 縮小推定

Σ̂ = B̂Σ̂_fB̂ᵀ + Σ̂_u で、Σ̂_u は残差分散の対角（厳密ファクターモデル）
または残差に対するSCR推定（ファクター複合モデル）。
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from covreg.covreg.core.base.errors import DataError, NumericalError
from covreg.covreg.core.base.matrices import DenseSymMatrix, SimilarityBasis, densify
from covreg.covreg.core.engine.inference import destandardize, standardize
from covreg.covreg.core.engine.penalty import PenaltySpec
from covreg.covreg.core.engine.solver import SolverOptions, assemble_gram
from covreg.covreg.core.engine.tuning import (
    DEFAULT_LAMBDA_MIN_RATIO,
    DEFAULT_N_LAMBDA,
    TuningResult,
    default_lambda_grid,
    select_lambda,
)

logger = logging.getLogger(__name__)


def _as_matrix(values: np.ndarray, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise DataError(f"{name} must be a 2-D matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name} has non-finite entries")
    return arr


@dataclass(frozen=True, eq=False)
class FactorPanel:
    """収益率 Y（n×p）とファクター F（n×M）"""

    returns: np.ndarray
    factors: np.ndarray

    def __post_init__(self) -> None:
        returns = _as_matrix(self.returns, "returns")
        factors = _as_matrix(self.factors, "factors")
        if returns.shape[0] != factors.shape[0]:
            raise DataError(f"returns have {returns.shape[0]} rows but factors have {factors.shape[0]}")
        object.__setattr__(self, "returns", returns)
        object.__setattr__(self, "factors", factors)


@dataclass(frozen=True, eq=False)
class FactorDecomposition:
    """ファクター分解

    Attributes:
        loadings: B̂（p×M）
        factor_cov: Σ̂_f = n⁻¹FᵀF（M×M）
        residuals: û（n×p）
        factors: 推定に使ったファクター系列（n×M）
    """

    loadings: np.ndarray
    factor_cov: np.ndarray
    residuals: np.ndarray
    factors: np.ndarray


def _check_rank(matrix: np.ndarray, name: str) -> None:
    rank = int(np.linalg.matrix_rank(matrix))
    if rank < matrix.shape[1]:
        raise NumericalError(f"{name} is rank deficient (rank {rank} < {matrix.shape[1]} columns)")


def factor_loadings(panel: FactorPanel) -> FactorDecomposition:
    """各資産の収益率をファクターに時系列回帰（切片なし）した B̂ = ((FᵀF)⁻¹FᵀY)ᵀ

    Raises:
        DataError: n ≤ M
        NumericalError: F がランク落ち
    """
    y, f = panel.returns, panel.factors
    n, n_factors = f.shape
    if n <= n_factors:
        raise DataError(f"loading regression needs more periods than factors (n = {n}, M = {n_factors})")
    _check_rank(f, "factor matrix")
    coef, *_ = np.linalg.lstsq(f, y, rcond=None)
    return FactorDecomposition(
        loadings=coef.T,
        factor_cov=f.T @ f / n,
        residuals=y - f @ coef,
        factors=f,
    )


def cbf_factors(returns: np.ndarray, loadings: np.ndarray) -> FactorDecomposition:
    """既知ローディング X（p×M）を使った期ごとの横断面回帰 f̂ᵢ = (XᵀX)⁻¹Xᵀyᵢ

    Raises:
        DataError: 次元不一致、p < M
        NumericalError: X がランク落ち
    """
    y = _as_matrix(returns, "returns")
    x = _as_matrix(loadings, "loadings")
    if x.shape[0] != y.shape[1]:
        raise DataError(f"loadings have {x.shape[0]} rows but returns have {y.shape[1]} assets")
    if x.shape[0] < x.shape[1]:
        raise DataError(f"cross-sectional regression needs p >= M (p = {x.shape[0]}, M = {x.shape[1]})")
    _check_rank(x, "characteristic loadings")
    coef, *_ = np.linalg.lstsq(x, y.T, rcond=None)
    factors = coef.T
    return FactorDecomposition(
        loadings=x,
        factor_cov=factors.T @ factors / y.shape[0],
        residuals=y - factors @ x.T,
        factors=factors,
    )


def composite_covariance(decomp: FactorDecomposition, residual_cov: DenseSymMatrix) -> DenseSymMatrix:
    """Σ̂ = B̂Σ̂_fB̂ᵀ + Σ̂_u

    Raises:
        DataError: 次元不一致
    """
    b = decomp.loadings
    if residual_cov.dim != b.shape[0] or decomp.factor_cov.shape != (b.shape[1], b.shape[1]):
        raise DataError(
            f"dimension mismatch: loadings {b.shape}, factor covariance {decomp.factor_cov.shape}, "
            f"residual covariance {residual_cov.dim}"
        )
    return DenseSymMatrix.symmetrized(b @ decomp.factor_cov @ b.T + residual_cov.data)


def residual_variances(decomp: FactorDecomposition) -> DenseSymMatrix:
    """厳密ファクターモデルの対角残差共分散 diag(n⁻¹Σᵢûᵢⱼ²)"""
    return DenseSymMatrix(np.diag(np.mean(decomp.residuals**2, axis=0)))


def sample_covariance(returns: np.ndarray) -> DenseSymMatrix:
    """中心化した収益率の標本共分散（分母 n）"""
    y = _as_matrix(returns, "returns")
    centered = y - y.mean(axis=0)
    return DenseSymMatrix.symmetrized(centered.T @ centered / y.shape[0])


def lw_shrink(
    sample_cov: DenseSymMatrix,
    returns: np.ndarray,
    rho: float | None = None,
) -> tuple[DenseSymMatrix, float]:
    """Ledoit–Wolf 縮小 Σ̂ = ρ{tr(S)/p}I + (1 − ρ)S

    m = tr(S)/p、d² = ‖S − mI‖²/p、b̄² = min(d², n⁻²Σᵢ‖yᵢyᵢᵀ − S‖²/p)、ρ = b̄²/d²。
    yᵢ は中心化した収益率。d² = 0 では ρ = 0。

    Args:
        sample_cov: 標本共分散 S
        returns: S を計算した n×p 収益率
        rho: 縮小強度の上書き（[0, 1]）

    Raises:
        DataError: n < 2、次元不一致、rho が範囲外
    """
    y = _as_matrix(returns, "returns")
    n, p = y.shape
    if n < 2:
        raise DataError(f"shrinkage needs at least 2 periods, got {n}")
    if sample_cov.dim != p:
        raise DataError(f"sample covariance dimension {sample_cov.dim} does not match {p} assets")
    s = sample_cov.data
    mu = float(np.trace(s)) / p

    if rho is None:
        target_gap = s - mu * np.eye(p)
        d2 = float(np.sum(target_gap**2)) / p
        if d2 == 0.0:
            shrinkage = 0.0
        else:
            centered = y - y.mean(axis=0)
            sq_norms = np.einsum("ij,ij->i", centered, centered)
            quad = np.einsum("ij,jk,ik->i", centered, s, centered)
            spread = float(np.sum(sq_norms**2 - 2.0 * quad + np.sum(s**2))) / (p * n**2)
            shrinkage = min(d2, max(spread, 0.0)) / d2
    else:
        if not 0.0 <= rho <= 1.0:
            raise DataError(f"shrinkage intensity must be in [0, 1], got {rho}")
        shrinkage = float(rho)

    shrunk = shrinkage * mu * np.eye(p) + (1.0 - shrinkage) * s
    return DenseSymMatrix.symmetrized(shrunk), shrinkage


def scr_residual_covariance(
    residuals: np.ndarray,
    basis: SimilarityBasis,
    spec: PenaltySpec,
    options: SolverOptions | None = None,
    n_lambda: int = DEFAULT_N_LAMBDA,
    min_ratio: float = DEFAULT_LAMBDA_MIN_RATIO,
) -> tuple[DenseSymMatrix, TuningResult]:
    """残差を標準化し、BICで λ を選んだSCR推定を元のスケールへ戻す

    Raises:
        DataError: 残差と基底の次元不一致、分散0の残差列
        NumericalError: すべての λ でフィットに失敗
    """
    panel = standardize(residuals)
    system = assemble_gram(basis, panel.data)
    grid = default_lambda_grid(system, n_lambda, min_ratio, options)
    tuned = select_lambda(system, spec, grid, options)
    fitted = densify(basis, tuned.best_fit.beta)
    logger.debug("residual SCR support %s at lambda=%.6g", tuned.best_fit.support, tuned.best_lambda)
    return destandardize(fitted, panel.sds), tuned
