"""最小分散ポートフォリオとローリング・バックテスト

推定共分散を固有値クリップで正定値化し、ω = Σ⁻¹1/(1ᵀΣ⁻¹1) を計算して
次期の実現リターンで評価する。ウェイトは負でもよい（全額投資制約のみ）。
"""

from __future__ import annotations

import logging
from collections.abc import Callable, Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import pandas as pd
import scipy.linalg
from pydantic import BaseModel, ConfigDict, Field

from covreg.covreg.core.base.errors import CovregError, DataError, NumericalError
from covreg.covreg.core.base.matrices import DenseSymMatrix

logger = logging.getLogger(__name__)

PD_EPS = 1e-6
BENCHMARK = "benchmark"

# これ以下の標準偏差は定数系列とみなす
_FLAT_SD = 1e-14


def pd_repair(sigma: DenseSymMatrix, eps: float = PD_EPS) -> DenseSymMatrix:
    """非正の固有値を eps に置き換え、固有ベクトルは保つ

    すでに正定値なら入力をそのまま返す。
    """
    eigvals, eigvecs = scipy.linalg.eigh(sigma.data)
    if eigvals[0] > 0.0:
        return sigma
    clipped = np.where(eigvals <= 0.0, eps, eigvals)
    logger.debug("pd_repair clipped %d eigenvalues", int(np.sum(eigvals <= 0.0)))
    return DenseSymMatrix.symmetrized((eigvecs * clipped) @ eigvecs.T)


@dataclass(frozen=True, eq=False)
class PortfolioWeights:
    """全額投資ポートフォリオのウェイト（Σ_j ω_j = 1）"""

    weights: np.ndarray

    def __post_init__(self) -> None:
        weights = np.array(self.weights, dtype=np.float64).ravel()
        weights.setflags(write=False)
        object.__setattr__(self, "weights", weights)

    def realize(self, period_returns: np.ndarray) -> np.ndarray:
        """各期のポートフォリオ収益 ωᵀy_t"""
        return np.atleast_2d(period_returns) @ self.weights


def gmv_weights(sigma: DenseSymMatrix) -> PortfolioWeights:
    """大域最小分散ウェイト ω = Σ⁻¹1/(1ᵀΣ⁻¹1)

    Raises:
        NumericalError: Σ が特異（正定値でない）
    """
    ones = np.ones(sigma.dim)
    try:
        factor = scipy.linalg.cho_factor(sigma.data)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"covariance is not positive definite: {exc}") from exc
    direction = scipy.linalg.cho_solve(factor, ones)
    total = float(np.sum(direction))
    if not np.isfinite(total) or total == 0.0:
        raise NumericalError("covariance is singular: 1'Sigma^-1 1 vanishes")
    return PortfolioWeights(direction / total)


@dataclass(frozen=True, eq=False)
class PerformanceReport:
    """ポートフォリオ評価指標

    Attributes:
        mean: 期平均収益
        sd: 標本標準偏差
        sharpe: (mean − rf)/sd（sd = 0 では None）
        alpha: 超過収益のベンチマーク回帰の切片（ベンチマーク分散0では None）
        beta: 同・傾き
        cqgr: 複利成長率 {Π(1 + r_t)}^{1/T} − 1
        period_returns: 評価期間の収益列
    """

    mean: float
    sd: float
    sharpe: float | None
    alpha: float | None
    beta: float | None
    cqgr: float
    period_returns: tuple[float, ...] = ()

    def as_row(self) -> dict[str, Any]:
        return {
            "mean": self.mean,
            "sd": self.sd,
            "sharpe": self.sharpe,
            "alpha": self.alpha,
            "beta": self.beta,
            "cqgr": self.cqgr,
            "periods": len(self.period_returns),
        }


def performance(
    portfolio_returns: Sequence[float] | np.ndarray,
    benchmark_returns: Sequence[float] | np.ndarray,
    risk_free: float = 0.0,
) -> PerformanceReport:
    """平均・SD・Sharpe・CAPM型 (alpha, beta)・CQGR

    渡す収益列は評価期間そのもの（初期の学習期間は含めない）。

    Raises:
        DataError: 長さ不一致、T < 2、r_t ≤ −1
    """
    r = np.asarray(portfolio_returns, dtype=np.float64)
    rm = np.asarray(benchmark_returns, dtype=np.float64)
    if r.shape != rm.shape or r.ndim != 1:
        raise DataError(f"portfolio and benchmark returns differ in shape: {r.shape} vs {rm.shape}")
    if r.shape[0] < 2:
        raise DataError(f"performance needs at least 2 periods, got {r.shape[0]}")
    if np.any(r <= -1.0):
        bad = int(np.flatnonzero(r <= -1.0)[0])
        raise DataError(f"portfolio return {r[bad]} at period {bad} is a total loss (<= -1)")

    mean = float(np.mean(r))
    sd = float(np.std(r, ddof=1))
    sharpe = (mean - risk_free) / sd if sd > _FLAT_SD * max(1.0, abs(mean)) else None

    excess = r - risk_free
    market_excess = rm - risk_free
    market_var = float(np.var(market_excess))
    alpha: float | None = None
    beta: float | None = None
    if market_var > 0.0:
        beta = float(np.mean((market_excess - market_excess.mean()) * (excess - excess.mean()))) / market_var
        alpha = float(excess.mean() - beta * market_excess.mean())

    cqgr = float(np.exp(np.mean(np.log1p(r)))) - 1.0
    return PerformanceReport(
        mean=mean,
        sd=sd,
        sharpe=sharpe,
        alpha=alpha,
        beta=beta,
        cqgr=cqgr,
        period_returns=tuple(float(v) for v in r),
    )


@dataclass(frozen=True, eq=False)
class TrainingWindow:
    """推定に渡す学習ウィンドウ

    Attributes:
        index: ウィンドウ番号（0始まり）
        returns: window×p の収益率
        factors: 同期間のファクター（window×M）
    """

    index: int
    returns: np.ndarray
    factors: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class CovarianceFit:
    """推定共分散と、SCR系手法で選ばれた類似度行列の添字"""

    sigma: DenseSymMatrix
    support: tuple[int, ...] | None = None


CovarianceEstimator = Callable[[TrainingWindow], DenseSymMatrix | CovarianceFit]


def as_covariance_fit(result: DenseSymMatrix | CovarianceFit) -> CovarianceFit:
    return result if isinstance(result, CovarianceFit) else CovarianceFit(result)


@dataclass(frozen=True, eq=False)
class BacktestReport:
    """手法ごとの評価結果

    Attributes:
        reports: 手法名 → 評価指標（最後にベンチマーク）
        rebalance_rows: 各リバランスの行番号
        weights: 手法名 → ウィンドウごとのウェイト
        supports: SCR系手法名 → ウィンドウごとの選択された項の添字
    """

    reports: dict[str, PerformanceReport]
    rebalance_rows: tuple[int, ...]
    weights: dict[str, list[np.ndarray]] = field(default_factory=dict)
    supports: dict[str, list[tuple[int, ...]]] = field(default_factory=dict)

    def table(self) -> pd.DataFrame:
        rows = [{"method": name, **report.as_row()} for name, report in self.reports.items()]
        return pd.DataFrame(rows)

    def selection_counts(self, terms: Sequence[str]) -> pd.DataFrame:
        """類似度行列ごとに、全ウィンドウで選ばれた回数を手法別に数える

        項名 `kind:source` は kind と source（共変量名やファイル名）に分けて載せる。

        Raises:
            DataError: 選択添字が項の数を超える
        """
        frame = pd.DataFrame(
            {
                "index": np.arange(len(terms)),
                "term": list(terms),
                "kind": [t.split(":", 1)[0] for t in terms],
                "source": [t.split(":", 1)[1] if ":" in t else "" for t in terms],
            }
        )
        for name, supports in self.supports.items():
            counts = np.zeros(len(terms), dtype=np.int64)
            for support in supports:
                if any(k >= len(terms) for k in support):
                    raise DataError(f"method '{name}' selected index {max(support)} but only {len(terms)} terms")
                np.add.at(counts, np.asarray(support, dtype=np.intp), 1)
            frame[name] = counts
        frame["windows"] = len(self.rebalance_rows)
        return frame


def benchmark_weights(p: int, market_caps: Sequence[float] | np.ndarray | None = None) -> PortfolioWeights:
    """時価総額加重（指定時）または等加重のベンチマーク"""
    if market_caps is None:
        return PortfolioWeights(np.full(p, 1.0 / p))
    caps = np.asarray(market_caps, dtype=np.float64)
    if caps.shape != (p,) or np.any(caps < 0.0) or not np.sum(caps) > 0.0:
        raise DataError(f"market caps must be {p} nonnegative values with a positive total")
    return PortfolioWeights(caps / np.sum(caps))


def _holding_return(weights: PortfolioWeights, block: np.ndarray) -> float:
    return float(np.prod(1.0 + weights.realize(block))) - 1.0


def _fit_window(
    estimators: Mapping[str, CovarianceEstimator],
    window: TrainingWindow,
    eps: float,
) -> tuple[dict[str, PortfolioWeights], dict[str, tuple[int, ...]]]:
    weights: dict[str, PortfolioWeights] = {}
    supports: dict[str, tuple[int, ...]] = {}
    for name, estimator in estimators.items():
        try:
            fit = as_covariance_fit(estimator(window))
            weights[name] = gmv_weights(pd_repair(fit.sigma, eps))
        except CovregError as exc:
            raise type(exc)(f"method '{name}' failed at window {window.index}: {exc}") from exc
        if fit.support is not None:
            supports[name] = fit.support
    return weights, supports


class BacktestSettings(BaseModel):
    """バックテスト設定

    Attributes:
        window: 学習ウィンドウ長（1 も可。収益率を標準化する手法は 2 以上が必要）
        step: リバランス間隔（1なら毎期）
        risk_free: 無リスク金利
        eps: PD修正の固有値下限
        threads: ウィンドウ並列数
    """

    model_config = ConfigDict(frozen=True)

    window: int = Field(default=60, ge=1)
    step: int = Field(default=1, ge=1)
    risk_free: float = 0.0
    eps: float = Field(default=PD_EPS, gt=0.0)
    threads: int = Field(default=1, ge=1)


def rolling_backtest(
    returns: np.ndarray,
    estimators: Mapping[str, CovarianceEstimator],
    settings: BacktestSettings,
    factors: np.ndarray | None = None,
    market_caps: Sequence[float] | np.ndarray | None = None,
) -> BacktestReport:
    """ローリングウィンドウで各手法のGMVポートフォリオを評価

    t = window, window + step, … で直近 window 期を使って共分散を推定し、
    [t, t + step) の保有期間のリターンを複利で1期分の収益にまとめる。
    CovarianceFit に support を返す手法は、ウィンドウごとの選択を report.supports に残す。

    Args:
        returns: T×p の収益率
        estimators: 手法名 → 共分散推定関数
        settings: バックテスト設定
        factors: T×M のファクター（ファクター系手法用）
        market_caps: ベンチマークの時価総額（長さ p）

    Raises:
        DataError: T ≤ window
        CovregError: 推定失敗（ウィンドウ番号付き）
    """
    panel = np.asarray(returns, dtype=np.float64)
    n_periods, p = panel.shape
    window, step = settings.window, settings.step
    if n_periods <= window:
        raise DataError(f"backtest needs window < T (window = {window}, T = {n_periods})")
    factor_panel = None if factors is None else np.asarray(factors, dtype=np.float64)
    if factor_panel is not None and factor_panel.shape[0] != n_periods:
        raise DataError(f"factor rows ({factor_panel.shape[0]}) do not match return rows ({n_periods})")

    starts = tuple(range(window, n_periods, step))
    windows = [
        TrainingWindow(
            index=i,
            returns=panel[t - window : t],
            factors=None if factor_panel is None else factor_panel[t - window : t],
        )
        for i, t in enumerate(starts)
    ]
    if settings.threads > 1:
        with ThreadPoolExecutor(max_workers=settings.threads) as pool:
            fitted = list(pool.map(lambda w: _fit_window(estimators, w, settings.eps), windows))
    else:
        fitted = [_fit_window(estimators, w, settings.eps) for w in windows]
    logger.info("fitted %d windows for %d methods", len(windows), len(estimators))

    bench = benchmark_weights(p, market_caps)
    blocks = [panel[t : min(t + step, n_periods)] for t in starts]
    bench_returns = [_holding_return(bench, block) for block in blocks]
    if len(blocks) < 2:
        logger.warning("only %d out-of-sample period(s); dispersion measures are undefined", len(blocks))

    reports: dict[str, PerformanceReport] = {}
    history: dict[str, list[np.ndarray]] = {}
    selections: dict[str, list[tuple[int, ...]]] = {}
    for name in estimators:
        realized = [_holding_return(weights[name], block) for (weights, _), block in zip(fitted, blocks, strict=True)]
        history[name] = [weights[name].weights for weights, _ in fitted]
        reports[name] = _summarize(realized, bench_returns, settings.risk_free)
        if all(name in supports for _, supports in fitted):
            selections[name] = [supports[name] for _, supports in fitted]
    reports[BENCHMARK] = _summarize(bench_returns, bench_returns, settings.risk_free)
    return BacktestReport(reports=reports, rebalance_rows=starts, weights=history, supports=selections)


def _summarize(realized: list[float], bench: list[float], risk_free: float) -> PerformanceReport:
    if len(realized) >= 2:
        return performance(realized, bench, risk_free)
    value = realized[0]
    return PerformanceReport(
        mean=value,
        sd=0.0,
        sharpe=None,
        alpha=None,
        beta=None,
        cqgr=value,
        period_returns=(value,),
    )
