"""BIC型基準による λ の選択

BIC(λ) = log(RSS) + log{log(K+1)}·log(p²)/p²·df_λ を λ グリッド上で最小化する。
LLA の初期値に使う Lasso の λ₀ を λ と別に選ぶ (λ₀, λ) の2次元探索も持つ。
RSS は n 平均の残差二乗和で、n > 1 でも同じ形をそのまま使う（n = 1 形の拡張）。
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import pandas as pd

from covreg.covreg.core.base.errors import DataError, NumericalError
from covreg.covreg.core.base.models import FitResult, GramSystem
from covreg.covreg.core.engine.penalty import PenaltySpec
from covreg.covreg.core.engine.solver import SolverOptions, fit_penalized, lasso, refine_lasso, rss

logger = logging.getLogger(__name__)

DEFAULT_N_LAMBDA = 50
DEFAULT_LAMBDA_MIN_RATIO = 1e-3


def bic_score(rss_value: float, p: int, n_similarity: int, df: int, n: int = 1) -> float:
    """BIC(λ)

    Args:
        rss_value: n⁻¹Σᵢ‖yᵢyᵢᵀ − Σ(β̂)‖_F²
        p: 応答の次元
        n_similarity: 類似度行列の数 K（切片 W₀ を除く）
        df: 非ゼロ係数の数（切片を含む）
        n: 観測の反復数（スコアの形には影響しない）

    Raises:
        DataError: K < 1、df < 0、n < 1
        NumericalError: rss ≤ 0
    """
    if n_similarity < 1:
        raise DataError(f"BIC needs at least one similarity matrix (K >= 1), got K = {n_similarity}")
    if df < 0 or n < 1:
        raise DataError(f"invalid BIC arguments: df = {df}, n = {n}")
    if not rss_value > 0.0:
        raise NumericalError(f"BIC undefined for non-positive RSS ({rss_value})")
    p2 = float(p) ** 2
    return math.log(rss_value) + math.log(math.log(n_similarity + 1.0)) * math.log(p2) / p2 * df


def lambda_max(system: GramSystem, options: SolverOptions | None = None) -> float:
    """全ペナルティ係数を初回の座標更新でゼロにする最小の λ

    切片が非ペナルティなら切片のみのフィット β̂₀ = Σ_WY[0]/Σ_W[0][0] での勾配から求める。
    """
    opts = options or SolverOptions()
    grad = system.moments.copy()
    start = 0
    if opts.unpenalized_intercept:
        beta0 = system.moments[0] / system.gram[0, 0]
        grad = system.moments - system.gram[:, 0] * beta0
        start = 1
    if start >= system.n_terms:
        raise DataError("no penalized coefficients: basis holds only the intercept")
    return float(np.max(np.abs(grad[start:]))) / system.p


def default_lambda_grid(
    system: GramSystem,
    n_lambda: int = DEFAULT_N_LAMBDA,
    min_ratio: float = DEFAULT_LAMBDA_MIN_RATIO,
    options: SolverOptions | None = None,
) -> list[float]:
    """λ_max から min_ratio·λ_max までの対数等間隔グリッド（降順）

    Raises:
        DataError: n_lambda < 1 または min_ratio が (0, 1) 外
        NumericalError: λ_max = 0（ペナルティ係数の勾配がすべて0）
    """
    if n_lambda < 1 or not 0.0 < min_ratio < 1.0:
        raise DataError(f"invalid grid settings: n_lambda = {n_lambda}, min_ratio = {min_ratio}")
    top = lambda_max(system, options)
    if not top > 0.0:
        raise NumericalError("lambda_max is zero: every penalized gradient vanishes")
    return [float(v) for v in np.geomspace(top, min_ratio * top, n_lambda)]


@dataclass(frozen=True, eq=False)
class TuningResult:
    """λ 選択結果

    Attributes:
        lambda_grid: 降順の λ グリッド
        scores: 各 λ の BIC（失敗した点は NaN）
        dfs: 各 λ の非ゼロ係数数（失敗は -1）
        rss_values: 各 λ の RSS（失敗は NaN）
        best_index: 選択された λ のグリッド位置
        best_fit: 選択された λ での最終推定
    """

    lambda_grid: tuple[float, ...]
    scores: np.ndarray
    dfs: np.ndarray
    rss_values: np.ndarray
    best_index: int
    best_fit: FitResult

    @property
    def best_lambda(self) -> float:
        return self.lambda_grid[self.best_index]

    @property
    def best_score(self) -> float:
        return float(self.scores[self.best_index])

    def score_table(self) -> pd.DataFrame:
        """(lambda, df, rss, bic) の表"""
        return pd.DataFrame(
            {
                "lambda": np.asarray(self.lambda_grid),
                "df": self.dfs,
                "rss": self.rss_values,
                "bic": self.scores,
            }
        )


@dataclass(frozen=True, eq=False)
class _GridPoint:
    fit: FitResult | None
    lasso_beta: np.ndarray | None
    rss: float
    df: int
    score: float


_FAILED = _GridPoint(None, None, float("nan"), -1, float("nan"))


def _evaluate(
    system: GramSystem,
    spec: PenaltySpec,
    options: SolverOptions,
    lasso_initial: np.ndarray | None,
) -> _GridPoint:
    try:
        initial_fit, fit = fit_penalized(system, spec, options, lasso_initial=lasso_initial)
        return _score(system, initial_fit, fit)
    except NumericalError as exc:
        logger.warning("fit at lambda=%.6g failed: %s", spec.lam, exc)
        return _FAILED


def _score(system: GramSystem, initial_fit: FitResult, fit: FitResult) -> _GridPoint:
    rss_value = rss(system, fit.beta)
    df = fit.coefficients.df
    score = bic_score(rss_value, system.p, system.n_terms - 1, df, system.n)
    return _GridPoint(fit, initial_fit.beta, rss_value, df, score)


def _checked_grid(grid: Sequence[float], name: str = "lambda grid") -> list[float]:
    """正の有限値であることを確認し降順に並べる"""
    values = [float(v) for v in grid]
    if not values:
        raise DataError(f"{name} is empty")
    if any(not (v > 0.0 and math.isfinite(v)) for v in values):
        raise DataError(f"{name} must contain positive finite values: {values}")
    return sorted(values, reverse=True)


def select_lambda(
    system: GramSystem,
    spec: PenaltySpec,
    grid: Sequence[float],
    options: SolverOptions | None = None,
    warm_start: bool = True,
    threads: int = 1,
) -> TuningResult:
    """グリッド上の各 λ で Lasso初期値（λ₀ = λ）→ LLA を実行し、BIC最小の λ を返す

    グリッドは降順に並べ替えて評価する。warm_start では各 λ のLasso初期値を
    直前（より大きい λ）のLasso解から始めるため逐次実行になる。
    warm_start=False かつ threads > 1 の場合のみスレッドで並列評価する。
    同点はより大きい λ を選ぶ。

    Args:
        system: Gram系
        spec: ペナルティ設定（λ はグリッド値で上書き）
        grid: 正の λ のリスト
        options: ソルバー設定
        warm_start: Lasso初期値のwarm start
        threads: 並列スレッド数

    Returns:
        TuningResult

    Raises:
        DataError: 空のグリッド、非正の λ
        NumericalError: すべての λ でフィットに失敗
    """
    opts = options or SolverOptions()
    lambdas = _checked_grid(grid)

    if warm_start or threads <= 1:
        points: list[_GridPoint] = []
        previous: np.ndarray | None = None
        for lam in lambdas:
            point = _evaluate(system, spec.with_lambda(lam), opts, previous if warm_start else None)
            if warm_start and point.lasso_beta is not None:
                previous = point.lasso_beta
            points.append(point)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            points = list(pool.map(lambda lam: _evaluate(system, spec.with_lambda(lam), opts, None), lambdas))

    scores = np.array([pt.score for pt in points])
    if np.all(np.isnan(scores)):
        raise NumericalError("all fits on the lambda grid failed")
    best_index = int(np.nanargmin(scores))
    best_fit = points[best_index].fit
    assert best_fit is not None
    logger.info("selected lambda=%.6g (df=%d, bic=%.6g)", lambdas[best_index], points[best_index].df, scores[best_index])
    return TuningResult(
        lambda_grid=tuple(lambdas),
        scores=scores,
        dfs=np.array([pt.df for pt in points], dtype=np.int64),
        rss_values=np.array([pt.rss for pt in points]),
        best_index=best_index,
        best_fit=best_fit,
    )


@dataclass(frozen=True, eq=False)
class PairTuningResult:
    """(λ₀, λ) 同時選択の結果

    Attributes:
        lambda0_grid: 降順の λ₀ グリッド（Lasso初期値）
        lambda_grid: 降順の λ グリッド（LLA）
        scores: BIC の行列 [λ₀, λ]（失敗は NaN）
        dfs: 非ゼロ係数数の行列（失敗は -1）
        rss_values: RSS の行列（失敗は NaN）
        best_index: 選択された (λ₀ の位置, λ の位置)
        best_fit: 選択された組での最終推定
    """

    lambda0_grid: tuple[float, ...]
    lambda_grid: tuple[float, ...]
    scores: np.ndarray
    dfs: np.ndarray
    rss_values: np.ndarray
    best_index: tuple[int, int]
    best_fit: FitResult

    @property
    def best_lambda0(self) -> float:
        return self.lambda0_grid[self.best_index[0]]

    @property
    def best_lambda(self) -> float:
        return self.lambda_grid[self.best_index[1]]

    @property
    def best_score(self) -> float:
        return float(self.scores[self.best_index])

    def score_table(self) -> pd.DataFrame:
        """(lambda0, lambda, df, rss, bic) の縦持ち表（λ₀ ごとに λ 降順）"""
        lam0, lam = np.meshgrid(self.lambda0_grid, self.lambda_grid, indexing="ij")
        return pd.DataFrame(
            {
                "lambda0": lam0.ravel(),
                "lambda": lam.ravel(),
                "df": self.dfs.ravel(),
                "rss": self.rss_values.ravel(),
                "bic": self.scores.ravel(),
            }
        )


def _lasso_path(
    system: GramSystem,
    lambdas0: Sequence[float],
    options: SolverOptions,
    warm_start: bool,
) -> list[FitResult | None]:
    fits: list[FitResult | None] = []
    previous: np.ndarray | None = None
    for lam0 in lambdas0:
        try:
            fit = lasso(system, lam0, options, initial=previous if warm_start else None)
        except NumericalError as exc:
            logger.warning("initial lasso at lambda0=%.6g failed: %s", lam0, exc)
            fits.append(None)
            continue
        previous = fit.beta
        fits.append(fit)
    return fits


def _refine_point(
    system: GramSystem,
    spec: PenaltySpec,
    initial_fit: FitResult | None,
    lam0: float,
    options: SolverOptions,
) -> _GridPoint:
    if initial_fit is None:
        return _FAILED
    try:
        return _score(system, initial_fit, refine_lasso(system, spec, initial_fit, lam0, options))
    except NumericalError as exc:
        logger.warning("fit at (lambda0=%.6g, lambda=%.6g) failed: %s", lam0, spec.lam, exc)
        return _FAILED


def select_lambda_pair(
    system: GramSystem,
    spec: PenaltySpec,
    grid: Sequence[float],
    lambda0_grid: Sequence[float] | None = None,
    options: SolverOptions | None = None,
    warm_start: bool = True,
    threads: int = 1,
) -> PairTuningResult:
    """Lasso初期値の λ₀ と LLA の λ を (λ₀, λ) の全組で BIC 最小化して選ぶ

    λ₀ ごとのLasso解は一度だけ計算し（warm_start では大きい λ₀ から順に warm start）、
    各 λ の LLA はその解から始める。λ₀ = λ の対角は select_lambda と同じ推定になる。
    LLA 段は組ごとに独立なので threads > 1 なら並列に評価する。
    同点は大きい λ₀、次に大きい λ を選ぶ。

    Args:
        system: Gram系
        spec: ペナルティ設定（λ はグリッド値で上書き）
        grid: LLA の λ グリッド
        lambda0_grid: λ₀ グリッド（省略時は grid と同じ）
        options: ソルバー設定
        warm_start: λ₀ 方向のLasso warm start
        threads: 並列スレッド数

    Raises:
        DataError: 空のグリッド、非正の値
        NumericalError: すべての組でフィットに失敗
    """
    opts = options or SolverOptions()
    lambdas = _checked_grid(grid)
    lambdas0 = lambdas if lambda0_grid is None else _checked_grid(lambda0_grid, "lambda0 grid")
    initials = _lasso_path(system, lambdas0, opts, warm_start)

    pairs = [(i, j) for i in range(len(lambdas0)) for j in range(len(lambdas))]

    def run(pair: tuple[int, int]) -> _GridPoint:
        i, j = pair
        return _refine_point(system, spec.with_lambda(lambdas[j]), initials[i], lambdas0[i], opts)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            points = list(pool.map(run, pairs))
    else:
        points = [run(pair) for pair in pairs]

    shape = (len(lambdas0), len(lambdas))
    scores = np.array([pt.score for pt in points]).reshape(shape)
    if np.all(np.isnan(scores)):
        raise NumericalError("all fits on the (lambda0, lambda) grid failed")
    flat = int(np.nanargmin(scores))
    best_fit = points[flat].fit
    assert best_fit is not None
    best_index = (flat // shape[1], flat % shape[1])
    logger.info(
        "selected lambda0=%.6g, lambda=%.6g (df=%d, bic=%.6g)",
        lambdas0[best_index[0]],
        lambdas[best_index[1]],
        points[flat].df,
        scores[best_index],
    )
    return PairTuningResult(
        lambda0_grid=tuple(lambdas0),
        lambda_grid=tuple(lambdas),
        scores=scores,
        dfs=np.array([pt.df for pt in points], dtype=np.int64).reshape(shape),
        rss_values=np.array([pt.rss for pt in points]).reshape(shape),
        best_index=best_index,
        best_fit=best_fit,
    )
