"""データ生成過程とモンテカルロ反復

y = Σ₀^{1/2}Z、Σ₀ = Σ_k β_k⁽⁰⁾W_k で観測を生成し、手法ごとの
選択精度（TPR / FPR / CS）・推定精度（RMSE / Bias / SD）・共分散誤差を集計する。
反復 r のシードは seed + r で、結果はスレッド数に依らず再現される。
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import StrEnum

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator

from covreg.covreg.core.base.errors import NumericalError
from covreg.covreg.core.base.matrices import (
    DenseSymMatrix,
    SimilarityBasis,
    SparseSymMatrix,
    densify,
    symmetric_sqrt,
)
from covreg.covreg.core.base.models import Coefficients, GramSystem
from covreg.covreg.core.engine.penalty import PenaltyFamily, PenaltySpec
from covreg.covreg.core.engine.similarity import bernoulli_similarity, correlated_similarity, rescale_l1
from covreg.covreg.core.engine.solver import SolverOptions, assemble_gram, kkt_residual, ols, oracle_fit
from covreg.covreg.core.engine.tuning import (
    DEFAULT_LAMBDA_MIN_RATIO,
    DEFAULT_N_LAMBDA,
    default_lambda_grid,
    select_lambda,
    select_lambda_pair,
)

logger = logging.getLogger(__name__)

PD_RETRY_CAP = 10

# 混合正規: 確率 0.9 で N(0, 5/9)、0.1 で N(0, 5)（分散1）
_MIXTURE_WEIGHT = 0.9
_MIXTURE_VARS = (5.0 / 9.0, 5.0)


class ZDist(StrEnum):
    """Z の分布"""

    STANDARD_NORMAL = "standard_normal"
    MIXTURE_NORMAL = "mixture_normal"
    STANDARDIZED_EXPONENTIAL = "standardized_exponential"


class WModel(StrEnum):
    """シミュレーションの類似度行列モデル"""

    BERNOULLI = "bernoulli"
    CORRELATED = "correlated"


class Method(StrEnum):
    """比較する推定手法"""

    SCAD = "scad"
    MCP = "mcp"
    LASSO = "lasso"
    SCAD_PAIR = "scad_pair"
    MCP_PAIR = "mcp_pair"
    OLS = "ols"
    ORACLE = "oracle"


_PENALIZED = {
    Method.SCAD: PenaltyFamily.SCAD,
    Method.MCP: PenaltyFamily.MCP,
    Method.LASSO: PenaltyFamily.LASSO,
    Method.SCAD_PAIR: PenaltyFamily.SCAD,
    Method.MCP_PAIR: PenaltyFamily.MCP,
}
# λ₀ と λ を別々に選ぶ手法
_PAIRED = frozenset({Method.SCAD_PAIR, Method.MCP_PAIR})


def default_beta0(k: int) -> list[float]:
    """β⁽⁰⁾ = (8, 1, 1, 1, 0, …, 0)"""
    head = [8.0, 1.0, 1.0, 1.0]
    return (head + [0.0] * max(0, k + 1 - len(head)))[: k + 1]


class DgpConfig(BaseModel):
    """データ生成過程の設定

    Attributes:
        p: 応答の次元
        k: 類似度行列の数 K
        beta0: 真の係数（既定は (8, 1, 1, 1, 0, …)）
        z_dist: Z の分布
        w_model: W_k の生成モデル
        theta: Bernoulli の成功確率 θ/p の θ
        ar_rho: 相関型共変量の AR 相関
        n: 観測の反復数
        seed: 基準シード
        freeze_basis: 全反復で反復0の W_k を使う
        rescale: W_k を ‖W_k‖₁ = 1 に正規化
    """

    model_config = ConfigDict(frozen=True)

    p: int = Field(default=200, ge=2)
    k: int = Field(default=10, ge=1)
    beta0: list[float] | None = None
    z_dist: ZDist = ZDist.STANDARD_NORMAL
    w_model: WModel = WModel.BERNOULLI
    theta: float = Field(default=5.0, ge=0.0)
    ar_rho: float = Field(default=0.5, gt=-1.0, lt=1.0)
    n: int = Field(default=1, ge=1)
    seed: int = 0
    freeze_basis: bool = False
    rescale: bool = False

    @model_validator(mode="after")
    def _check_beta0(self) -> DgpConfig:
        if self.beta0 is not None and len(self.beta0) != self.k + 1:
            raise ValueError(f"beta0 must have k + 1 = {self.k + 1} entries, got {len(self.beta0)}")
        return self

    @property
    def truth(self) -> Coefficients:
        return Coefficients(self.beta0 if self.beta0 is not None else default_beta0(self.k))


def generate_z(dist: ZDist, size: int | tuple[int, ...], rng: np.random.Generator) -> np.ndarray:
    """平均0・分散1の i.i.d. 乱数"""
    if dist is ZDist.STANDARD_NORMAL:
        return rng.standard_normal(size)
    if dist is ZDist.MIXTURE_NORMAL:
        first = rng.random(size) < _MIXTURE_WEIGHT
        normal = rng.standard_normal(size)
        return np.where(first, math.sqrt(_MIXTURE_VARS[0]), math.sqrt(_MIXTURE_VARS[1])) * normal
    return rng.standard_exponential(size) - 1.0


def _ar_cholesky(k: int, rho: float) -> np.ndarray:
    lags = np.abs(np.subtract.outer(np.arange(k), np.arange(k)))
    return np.linalg.cholesky(rho**lags)


def _draw_matrices(config: DgpConfig, rng: np.random.Generator) -> list[SparseSymMatrix]:
    if config.w_model is WModel.BERNOULLI:
        matrices = [bernoulli_similarity(config.p, config.theta, rng, denominator=config.p) for _ in range(config.k)]
    else:
        covariates = rng.standard_normal((config.p, config.k)) @ _ar_cholesky(config.k, config.ar_rho).T
        matrices = [correlated_similarity(covariates[:, j]) for j in range(config.k)]
    if config.rescale:
        matrices = [rescale_l1(w) if w.values.size else w for w in matrices]
    return matrices


@dataclass(frozen=True, eq=False)
class DgpSample:
    """1反復分の生成データ"""

    basis: SimilarityBasis
    observations: np.ndarray
    truth: Coefficients
    sigma0: DenseSymMatrix


def _streams(config: DgpConfig, replication: int) -> tuple[np.random.Generator, np.random.Generator]:
    """(基底用, Z用) の乱数生成器"""
    basis_seq, z_seq = np.random.SeedSequence(config.seed + replication).spawn(2)
    if config.freeze_basis:
        basis_seq = np.random.SeedSequence(config.seed).spawn(2)[0]
    return np.random.Generator(np.random.Philox(basis_seq)), np.random.Generator(np.random.Philox(z_seq))


def dgp(config: DgpConfig, replication: int = 0) -> DgpSample:
    """反復 replication のデータを生成

    Σ₀ が正定値でなければ W_k を引き直す（最大 PD_RETRY_CAP 回）。

    Raises:
        NumericalError: 引き直し上限に達しても Σ₀ が正定値にならない
    """
    basis_rng, z_rng = _streams(config, replication)
    truth = config.truth
    for attempt in range(1, PD_RETRY_CAP + 1):
        basis = SimilarityBasis.with_identity(_draw_matrices(config, basis_rng), config.p)
        sigma0 = densify(basis, truth.beta)
        if np.linalg.eigvalsh(sigma0.data)[0] > 0.0:
            break
        logger.warning("Sigma0 not positive definite (replication %d, attempt %d); redrawing", replication, attempt)
    else:
        raise NumericalError(f"Sigma0 not positive definite after {PD_RETRY_CAP} draws (replication {replication})")
    root = symmetric_sqrt(sigma0)
    z = generate_z(config.z_dist, (config.n, config.p), z_rng)
    return DgpSample(basis=basis, observations=z @ root, truth=truth, sigma0=sigma0)


class SimulationSettings(BaseModel):
    """反復実験の設定"""

    model_config = ConfigDict(frozen=True)

    replications: int = Field(default=20, ge=1)
    methods: list[Method] = Field(default_factory=lambda: [Method.SCAD, Method.MCP, Method.OLS, Method.ORACLE])
    n_lambda: int = Field(default=DEFAULT_N_LAMBDA, ge=1)
    min_ratio: float = Field(default=DEFAULT_LAMBDA_MIN_RATIO, gt=0.0, lt=1.0)
    threads: int = Field(default=1, ge=1)


@dataclass(frozen=True, eq=False)
class ReplicationOutcome:
    """1反復・1手法の結果（失敗時は beta が None）"""

    replication: int
    method: Method
    beta: np.ndarray | None
    spectral_err: float = float("nan")
    frobenius_err: float = float("nan")
    lam: float | None = None
    lam0: float | None = None


@dataclass(frozen=True, eq=False)
class MethodSummary:
    """手法ごとの集計値"""

    tpr: float
    fpr: float
    cs: float
    rmse: float
    bias: float
    sd: float
    spectral_err: float
    frobenius_err: float
    replications: int
    failures: int


@dataclass(frozen=True, eq=False)
class SimulationReport:
    """手法ごとの集計と各反復の結果"""

    summaries: dict[Method, MethodSummary]
    replications: int
    outcomes: list[ReplicationOutcome] = field(default_factory=list)

    def table(self) -> pd.DataFrame:
        rows = [{"method": method.value, **vars(summary)} for method, summary in self.summaries.items()]
        return pd.DataFrame(rows)


def _covariance_errors(basis: SimilarityBasis, beta: np.ndarray, sigma0: DenseSymMatrix) -> tuple[float, float]:
    diff = densify(basis, beta).data - sigma0.data
    spectral = float(np.max(np.abs(np.linalg.eigvalsh(diff))))
    return spectral, float(np.linalg.norm(diff)) / math.sqrt(sigma0.dim)


def _fit_method(
    method: Method,
    sample: DgpSample,
    system: GramSystem,
    settings: SimulationSettings,
    options: SolverOptions,
) -> tuple[np.ndarray, float | None, float | None]:
    """推定値と選ばれた (λ, λ₀) を返す（調整しない手法は None）"""
    if method is Method.OLS:
        return ols(system, options).beta, None, None
    if method is Method.ORACLE:
        return oracle_fit(system, sample.truth.support, options).beta, None, None
    spec = PenaltySpec(family=_PENALIZED[method], gamma=None)
    grid = default_lambda_grid(system, settings.n_lambda, settings.min_ratio, options)
    if method in _PAIRED:
        paired = select_lambda_pair(system, spec, grid, options=options)
        fit, lam, lam0 = paired.best_fit, paired.best_lambda, paired.best_lambda0
    else:
        tuned = select_lambda(system, spec, grid, options)
        fit, lam = tuned.best_fit, tuned.best_lambda
        lam0 = lam
    assert fit.weights is not None
    kkt = kkt_residual(system, fit.beta, fit.weights)
    if kkt > options.kkt_tol:
        logger.warning("%s fit has kkt residual %.3e above tolerance", method.value, kkt)
    return fit.beta, lam, lam0


def _run_one(
    config: DgpConfig,
    replication: int,
    settings: SimulationSettings,
    options: SolverOptions,
) -> list[ReplicationOutcome]:
    sample = dgp(config, replication)
    system = assemble_gram(sample.basis, sample.observations)
    outcomes: list[ReplicationOutcome] = []
    for method in settings.methods:
        try:
            beta, lam, lam0 = _fit_method(method, sample, system, settings, options)
        except NumericalError as exc:
            logger.warning("replication %d excluded for %s: %s", replication, method.value, exc)
            outcomes.append(ReplicationOutcome(replication, method, None))
            continue
        spectral, frobenius = _covariance_errors(sample.basis, beta, sample.sigma0)
        outcomes.append(ReplicationOutcome(replication, method, beta, spectral, frobenius, lam, lam0))
    return outcomes


def _support(beta: np.ndarray) -> frozenset[int]:
    return frozenset(Coefficients(beta).support)


def summarize(
    method: Method,
    outcomes: Sequence[ReplicationOutcome],
    truth: Coefficients,
) -> MethodSummary:
    """反復結果を集計

    RMSE = {(RK)⁻¹ΣᵣΣₖ(β̂ₖ − βₖ)²}^{1/2}、Bias = K⁻¹Σₖ|β̄ₖ − βₖ|、
    SD = K⁻¹Σₖ{R⁻¹Σᵣ(β̂ₖ − β̄ₖ)²}^{1/2} で、和は k = 0…K にわたる。
    選択が空の反復の FPR 項は0。OLS の選択指標は NaN。
    """
    done = [o for o in outcomes if o.beta is not None]
    failures = len(outcomes) - len(done)
    nan = float("nan")
    if not done:
        return MethodSummary(nan, nan, nan, nan, nan, nan, nan, nan, 0, failures)
    betas = np.array([o.beta for o in done])
    n_done = betas.shape[0]
    k = truth.beta.shape[0] - 1
    true_support = frozenset(truth.support)

    if method is Method.OLS:
        tpr = fpr = cs = nan
    else:
        supports = [_support(b) for b in betas]
        tpr = float(np.mean([len(s & true_support) / len(true_support) for s in supports]))
        fpr = float(np.mean([len(s - true_support) / len(s) if s else 0.0 for s in supports]))
        cs = float(np.mean([s == true_support for s in supports]))

    errors = betas - truth.beta
    mean_beta = betas.mean(axis=0)
    return MethodSummary(
        tpr=tpr,
        fpr=fpr,
        cs=cs,
        rmse=math.sqrt(float(np.sum(errors**2)) / (n_done * k)),
        bias=float(np.sum(np.abs(mean_beta - truth.beta))) / k,
        sd=float(np.sum(np.sqrt(np.mean((betas - mean_beta) ** 2, axis=0)))) / k,
        spectral_err=float(np.mean([o.spectral_err for o in done])),
        frobenius_err=float(np.mean([o.frobenius_err for o in done])),
        replications=n_done,
        failures=failures,
    )


def run_replications(
    config: DgpConfig,
    settings: SimulationSettings,
    options: SolverOptions | None = None,
) -> SimulationReport:
    """R 回の反復で各手法を評価

    SCAD / MCP / Lasso はBICで λ を選び、*_pair は (λ₀, λ) を同時に選ぶ。OLS とオラクルは調整なし。
    数値的に失敗した反復はその手法の集計から除外し、件数を記録する。
    """
    opts = options or SolverOptions()
    replications = range(settings.replications)
    if settings.threads > 1:
        with ThreadPoolExecutor(max_workers=settings.threads) as pool:
            per_rep = list(pool.map(lambda r: _run_one(config, r, settings, opts), replications))
    else:
        per_rep = []
        for r in replications:
            per_rep.append(_run_one(config, r, settings, opts))
            logger.debug("replication %d/%d done", r + 1, settings.replications)

    outcomes = [o for rep in per_rep for o in rep]
    truth = config.truth
    summaries = {
        method: summarize(method, [o for o in outcomes if o.method is method], truth) for method in settings.methods
    }
    return SimulationReport(summaries=summaries, replications=settings.replications, outcomes=outcomes)
