"""バックテスト用の共分散推定手法レジストリ

各手法は学習ウィンドウから CovarianceFit を返す。SCR系は標準化した収益率
（またはファクター残差）にBICで λ を選んだフィットを行い、元のスケールへ戻す。
SCR系の CovarianceFit は選ばれた類似度行列の添字を support に持つ。
"""

from __future__ import annotations

import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np

from covreg.covreg.core.base.errors import DataError
from covreg.covreg.core.base.matrices import DenseSymMatrix, SimilarityBasis, densify
from covreg.covreg.core.engine.factor import (
    FactorDecomposition,
    FactorPanel,
    cbf_factors,
    composite_covariance,
    factor_loadings,
    lw_shrink,
    residual_variances,
    sample_covariance,
    scr_residual_covariance,
)
from covreg.covreg.core.engine.inference import destandardize, standardize
from covreg.covreg.core.engine.penalty import PenaltyFamily, PenaltySpec
from covreg.covreg.core.engine.portfolio import CovarianceEstimator, CovarianceFit, TrainingWindow, as_covariance_fit
from covreg.covreg.core.engine.solver import SolverOptions, assemble_gram, ols
from covreg.covreg.core.engine.tuning import DEFAULT_LAMBDA_MIN_RATIO, DEFAULT_N_LAMBDA

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class EstimatorContext:
    """推定手法が共有する設定

    Attributes:
        basis: 資産の類似度基底（SCR系で必須）
        spec: ペナルティ設定（family と gamma を使用、λ はBICで選ぶ）
        options: ソルバー設定
        n_lambda: λ グリッドの点数
        min_ratio: λ グリッドの最小比
        characteristics: CBFの既知ローディング（p×M）
    """

    basis: SimilarityBasis | None = None
    spec: PenaltySpec = field(default_factory=PenaltySpec)
    options: SolverOptions = field(default_factory=SolverOptions)
    n_lambda: int = DEFAULT_N_LAMBDA
    min_ratio: float = DEFAULT_LAMBDA_MIN_RATIO
    characteristics: np.ndarray | None = None

    def require_basis(self) -> SimilarityBasis:
        if self.basis is None:
            raise DataError("this method needs a similarity basis (covariates, labels or edges)")
        return self.basis

    def scr(self, residuals: np.ndarray, family: PenaltyFamily | None = None) -> CovarianceFit:
        spec = self.spec if family is None else PenaltySpec(family=family, gamma=None)
        sigma, tuned = scr_residual_covariance(
            residuals, self.require_basis(), spec, self.options, self.n_lambda, self.min_ratio
        )
        return CovarianceFit(sigma, tuned.best_fit.support)


_Method = Callable[[EstimatorContext, TrainingWindow], DenseSymMatrix | CovarianceFit]


def _sample(ctx: EstimatorContext, window: TrainingWindow) -> DenseSymMatrix:
    return sample_covariance(window.returns)


def _identity(ctx: EstimatorContext, window: TrainingWindow) -> DenseSymMatrix:
    return DenseSymMatrix(np.eye(window.returns.shape[1]))


def _lw(ctx: EstimatorContext, window: TrainingWindow) -> DenseSymMatrix:
    shrunk, _ = lw_shrink(sample_covariance(window.returns), window.returns)
    return shrunk


def _scr(ctx: EstimatorContext, window: TrainingWindow) -> CovarianceFit:
    return ctx.scr(window.returns)


def _scr_mcp(ctx: EstimatorContext, window: TrainingWindow) -> CovarianceFit:
    return ctx.scr(window.returns, PenaltyFamily.MCP)


def _ols(ctx: EstimatorContext, window: TrainingWindow) -> DenseSymMatrix:
    basis = ctx.require_basis()
    panel = standardize(window.returns)
    coef = ols(assemble_gram(basis, panel.data), ctx.options)
    return destandardize(densify(basis, coef.beta), panel.sds)


def _time_series_factors(window: TrainingWindow) -> FactorDecomposition:
    if window.factors is None:
        raise DataError("factor methods need a factor file aligned with the returns")
    return factor_loadings(FactorPanel(window.returns, window.factors))


def _characteristic_factors(ctx: EstimatorContext, window: TrainingWindow) -> FactorDecomposition:
    if ctx.characteristics is None:
        raise DataError("CBF methods need a characteristics (loadings) file")
    return cbf_factors(window.returns, ctx.characteristics)


def _factor(ctx: EstimatorContext, window: TrainingWindow) -> DenseSymMatrix:
    decomp = _time_series_factors(window)
    return composite_covariance(decomp, residual_variances(decomp))


def _factor_scr(ctx: EstimatorContext, window: TrainingWindow) -> CovarianceFit:
    decomp = _time_series_factors(window)
    residual = ctx.scr(decomp.residuals)
    return CovarianceFit(composite_covariance(decomp, residual.sigma), residual.support)


def _cbf(ctx: EstimatorContext, window: TrainingWindow) -> DenseSymMatrix:
    decomp = _characteristic_factors(ctx, window)
    return composite_covariance(decomp, residual_variances(decomp))


def _cbf_scr(ctx: EstimatorContext, window: TrainingWindow) -> CovarianceFit:
    decomp = _characteristic_factors(ctx, window)
    residual = ctx.scr(decomp.residuals)
    return CovarianceFit(composite_covariance(decomp, residual.sigma), residual.support)


def _scr_lw(ctx: EstimatorContext, window: TrainingWindow) -> CovarianceFit:
    fit = ctx.scr(window.returns)
    shrunk, _ = lw_shrink(fit.sigma, window.returns)
    return CovarianceFit(shrunk, fit.support)


ESTIMATORS: dict[str, _Method] = {
    "sample": _sample,
    "identity": _identity,
    "lw": _lw,
    "scr": _scr,
    "scr_mcp": _scr_mcp,
    "ols": _ols,
    "factor": _factor,
    "factor_scr": _factor_scr,
    "cbf": _cbf,
    "cbf_scr": _cbf_scr,
    "scr_lw": _scr_lw,
}


def get_estimator(name: str, context: EstimatorContext) -> CovarianceEstimator:
    """名前から推定関数を取得

    Raises:
        DataError: 未知の手法名
    """
    try:
        method = ESTIMATORS[name]
    except KeyError:
        raise DataError(f"unknown covariance method '{name}' (available: {', '.join(ESTIMATORS)})") from None

    def estimate(window: TrainingWindow) -> CovarianceFit:
        return as_covariance_fit(method(context, window))

    return estimate


def build_estimators(names: Sequence[str], context: EstimatorContext) -> dict[str, CovarianceEstimator]:
    """手法名のリストから rolling_backtest 用の辞書を作る"""
    if not names:
        raise DataError("no covariance methods selected")
    logger.debug("covariance methods: %s", ", ".join(names))
    return {name: get_estimator(name, context) for name in names}
