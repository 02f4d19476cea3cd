"""Gram系の組み立てとOLS / オラクル / Lasso / LLA 推定

損失は Q_n(β) = (2p)⁻¹ n⁻¹Σᵢ‖yᵢyᵢᵀ − Σ(β)‖_F² で、
十分統計量 (Σ_W, Σ_WY, c) だけから評価できる。
すべての解法は (K+1) 次元で完結し、p×p の行列は作らない。
"""

from __future__ import annotations

import logging
from collections.abc import Sequence

import numpy as np
import scipy.linalg
from pydantic import BaseModel, ConfigDict, Field

from covreg.covreg.core.base.errors import DataError, NumericalError
from covreg.covreg.core.base.matrices import SimilarityBasis, quad_forms, trace_product
from covreg.covreg.core.base.models import ZERO_TOL, Coefficients, FitResult, GramSystem
from covreg.covreg.core.engine.penalty import PenaltyFamily, PenaltySpec, penalty_derivs, penalty_values

logger = logging.getLogger(__name__)


class SolverOptions(BaseModel):
    """ソルバー設定

    Attributes:
        tol: 座標降下の収束判定（係数変化の最大値）
        kkt_tol: 収束とみなすKKT残差
        max_iter: 座標降下の最大スイープ数
        max_outer: LLAの最大外側反復数
        unpenalized_intercept: index 0（W₀ = I）をペナルティから外す
        cond_limit: OLS / オラクルで許容する条件数
    """

    model_config = ConfigDict(frozen=True)

    tol: float = Field(default=1e-8, gt=0.0)
    kkt_tol: float = Field(default=1e-6, gt=0.0)
    max_iter: int = Field(default=10_000, ge=1)
    max_outer: int = Field(default=50, ge=1)
    unpenalized_intercept: bool = True
    cond_limit: float = Field(default=1e12, gt=1.0)


def _as_observations(observations: np.ndarray) -> np.ndarray:
    obs = np.asarray(observations, dtype=np.float64)
    if obs.ndim == 1:
        obs = obs[np.newaxis, :]
    if obs.ndim != 2:
        raise DataError(f"observations must be an n x p matrix, got shape {obs.shape}")
    return obs


def assemble_gram(basis: SimilarityBasis, observations: np.ndarray) -> GramSystem:
    """Gram系 (Σ_W, Σ_WY, c) を組み立てる

    Args:
        basis: 類似度基底
        observations: n×p 観測（1次元なら n = 1）

    Returns:
        GramSystem

    Raises:
        DataError: n = 0、または観測幅と基底次元の不一致
    """
    obs = _as_observations(observations)
    n, width = obs.shape
    if n == 0:
        raise DataError("no observations (n = 0)")
    if width != basis.dim:
        raise DataError(f"observation width {width} does not match basis dimension {basis.dim}")

    size = basis.n_terms
    gram = np.empty((size, size))
    for k in range(size):
        for l in range(k, size):
            gram[k, l] = gram[l, k] = trace_product(basis[k], basis[l])
    moments = np.array([float(np.mean(quad_forms(w_k, obs))) for w_k in basis.matrices])
    sq_norms = np.einsum("ij,ij->i", obs, obs)
    return GramSystem(gram=gram, moments=moments, p=width, n=n, c=float(np.mean(sq_norms**2)))


def _check_length(system: GramSystem, beta: np.ndarray) -> np.ndarray:
    coef = np.asarray(beta, dtype=np.float64).ravel()
    if coef.shape[0] != system.n_terms:
        raise DataError(f"coefficient length {coef.shape[0]} does not match system size {system.n_terms}")
    return coef


def rss(system: GramSystem, beta: Sequence[float] | np.ndarray) -> float:
    """n⁻¹Σᵢ‖yᵢyᵢᵀ − Σ(β)‖_F² = c − 2βᵀΣ_WY + βᵀΣ_Wβ（0で下限クリップ）"""
    coef = _check_length(system, np.asarray(beta))
    value = system.c - 2.0 * float(coef @ system.moments) + float(coef @ system.gram @ coef)
    return max(value, 0.0)


def loss(system: GramSystem, beta: Sequence[float] | np.ndarray) -> float:
    """Q_n(β) = rss / (2p)"""
    return rss(system, beta) / (2.0 * system.p)


def _solve_restricted(system: GramSystem, indices: Sequence[int], cond_limit: float) -> Coefficients:
    idx = np.asarray(indices, dtype=np.int64)
    sub_gram = system.gram[np.ix_(idx, idx)]
    cond = np.linalg.cond(sub_gram)
    if not np.isfinite(cond) or cond > cond_limit:
        raise NumericalError(f"Gram matrix is singular or ill-conditioned (condition number {cond:.3e})")
    try:
        factor = scipy.linalg.cho_factor(sub_gram)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"Gram matrix is not positive definite: {exc}") from exc
    values = scipy.linalg.cho_solve(factor, system.moments[idx])
    return Coefficients.from_support(values, idx.tolist(), system.n_terms)


def ols(system: GramSystem, options: SolverOptions | None = None) -> Coefficients:
    """β̂_OLS = Σ_W⁻¹Σ_WY

    Raises:
        NumericalError: Σ_W が特異または条件数が上限超過
    """
    opts = options or SolverOptions()
    return _solve_restricted(system, range(system.n_terms), opts.cond_limit)


def oracle_fit(system: GramSystem, support: Sequence[int], options: SolverOptions | None = None) -> Coefficients:
    """サポートを既知とした最小二乗推定 β_S = Σ_{W,S}⁻¹Σ_{WY,S}

    Raises:
        DataError: サポートが空または範囲外
        NumericalError: 制限Gram行列が特異
    """
    opts = options or SolverOptions()
    indices = sorted({int(k) for k in support})
    if not indices:
        raise DataError("oracle support is empty")
    if indices[0] < 0 or indices[-1] >= system.n_terms:
        raise DataError(f"oracle support {indices} out of range for {system.n_terms} terms")
    return _solve_restricted(system, indices, opts.cond_limit)


def kkt_residual(
    system: GramSystem,
    beta: Sequence[float] | np.ndarray,
    weights: Sequence[float] | np.ndarray,
) -> float:
    """重み付きLassoの最適性残差

    ∇_kQ_n = (Σ_Wβ − Σ_WY)_k / p として、β_k ≠ 0 では |∇_kQ_n + w_k sign(β_k)|、
    β_k = 0 では max(0, |∇_kQ_n| − w_k) の最大値。
    """
    coef = _check_length(system, np.asarray(beta))
    w = np.asarray(weights, dtype=np.float64)
    grad = (system.gram @ coef - system.moments) / system.p
    active = np.abs(coef) > ZERO_TOL
    residual = np.where(
        active,
        np.abs(grad + w * np.sign(coef)),
        np.maximum(0.0, np.abs(grad) - w),
    )
    return float(np.max(residual, initial=0.0))


def _soft_threshold(value: float, level: float) -> float:
    if value > level:
        return value - level
    if value < -level:
        return value + level
    return 0.0


def _sweep(
    gram: np.ndarray,
    grad_raw: np.ndarray,
    beta: np.ndarray,
    thresholds: np.ndarray,
    coords: Sequence[int],
) -> float:
    """座標を1巡して最大変化量を返す（beta, grad_raw はその場で更新）"""
    max_change = 0.0
    for k in coords:
        old = beta[k]
        partial = gram[k, k] * old - grad_raw[k]
        new = _soft_threshold(partial, thresholds[k]) / gram[k, k]
        if new != old:
            delta = new - old
            grad_raw += delta * gram[:, k]
            beta[k] = new
            max_change = max(max_change, abs(delta))
    return max_change


def weighted_objective(system: GramSystem, beta: np.ndarray, weights: np.ndarray) -> float:
    """Q_n(β) + Σ_k w_k|β_k|"""
    return loss(system, beta) + float(np.sum(weights * np.abs(beta)))


def weighted_lasso(
    system: GramSystem,
    weights: Sequence[float] | np.ndarray,
    options: SolverOptions | None = None,
    initial: Sequence[float] | np.ndarray | None = None,
) -> FitResult:
    """Q_n(β) + Σ_k w_k|β_k| を巡回座標降下で最小化

    Q_n が 1/(2p) を含み Gram が正規化されていないため、
    座標更新 β_k ← S(Σ_WY[k] − Σ_{l≠k}Σ_W[k][l]β_l, p·w_k) / Σ_W[k][k] が厳密な1次元最小化になる。
    全座標スイープの後は非ゼロ座標だけを収束まで回し、再び全座標で確認する。

    Args:
        system: Gram系
        weights: 非負の重み（長さ K+1）
        options: ソルバー設定
        initial: 初期値（warm start）

    Returns:
        FitResult: max_iter 超過時は converged = False

    Raises:
        DataError: 重みの長さ・値の不正
        NumericalError: Σ_W[k][k] ≤ 0
    """
    opts = options or SolverOptions()
    w = np.asarray(weights, dtype=np.float64).ravel()
    if w.shape[0] != system.n_terms:
        raise DataError(f"weight length {w.shape[0]} does not match system size {system.n_terms}")
    if not np.all(np.isfinite(w)) or np.any(w < 0.0):
        raise DataError("weights must be finite and nonnegative")
    gram = system.gram
    diag = np.diag(gram)
    if np.any(diag <= 0.0):
        bad = int(np.flatnonzero(diag <= 0.0)[0])
        raise NumericalError(f"Sigma_W[{bad}][{bad}] = {diag[bad]} (zero similarity matrix in basis)")

    beta = np.zeros(system.n_terms) if initial is None else _check_length(system, np.asarray(initial)).copy()
    thresholds = system.p * w
    all_coords = list(range(system.n_terms))
    sweeps = 0
    converged = False
    while sweeps < opts.max_iter:
        grad_raw = gram @ beta - system.moments
        max_change = _sweep(gram, grad_raw, beta, thresholds, all_coords)
        sweeps += 1
        if max_change <= opts.tol and kkt_residual(system, beta, w) <= opts.kkt_tol:
            converged = True
            break
        active = [k for k in all_coords if beta[k] != 0.0]
        while active and sweeps < opts.max_iter:
            if _sweep(gram, grad_raw, beta, thresholds, active) <= opts.tol:
                sweeps += 1
                break
            sweeps += 1

    beta[np.abs(beta) <= ZERO_TOL] = 0.0
    kkt = kkt_residual(system, beta, w)
    if not converged:
        logger.warning("weighted lasso did not converge in %d sweeps (kkt residual %.3e)", sweeps, kkt)
    return FitResult(
        coefficients=Coefficients(beta),
        iterations=sweeps,
        converged=converged,
        objective=weighted_objective(system, beta, w),
        kkt_residual=kkt,
        weights=w,
        inner_iterations=sweeps,
    )


def lasso_weights(n_terms: int, lam: float, options: SolverOptions | None = None) -> np.ndarray:
    """一様重み λ（切片を除く）"""
    opts = options or SolverOptions()
    weights = np.full(n_terms, float(lam))
    if opts.unpenalized_intercept:
        weights[0] = 0.0
    return weights


def lasso(
    system: GramSystem,
    lam: float,
    options: SolverOptions | None = None,
    initial: Sequence[float] | np.ndarray | None = None,
) -> FitResult:
    """Lasso推定 argmin Q_n(β) + λ‖β‖₁（切片は既定で非ペナルティ）"""
    return weighted_lasso(system, lasso_weights(system.n_terms, lam, options), options, initial)


def _lla_weights(spec: PenaltySpec, beta: np.ndarray, options: SolverOptions) -> np.ndarray:
    weights = penalty_derivs(spec, np.abs(beta))
    if options.unpenalized_intercept:
        weights[0] = 0.0
    return weights


def penalized_objective(
    system: GramSystem,
    beta: Sequence[float] | np.ndarray,
    spec: PenaltySpec,
    options: SolverOptions | None = None,
) -> float:
    """Q_n(β) + Σ_k p_λ(|β_k|)（切片が非ペナルティなら k ≥ 1 のみ）"""
    opts = options or SolverOptions()
    coef = _check_length(system, np.asarray(beta))
    penalties = penalty_values(spec, np.abs(coef))
    if opts.unpenalized_intercept:
        penalties[0] = 0.0
    return loss(system, coef) + float(np.sum(penalties))


def lla(
    system: GramSystem,
    spec: PenaltySpec,
    initial: Coefficients,
    options: SolverOptions | None = None,
) -> FitResult:
    """局所線形近似（LLA）による折り畳み凹ペナルティ推定

    各外側反復で ŵ_k = p′_λ(|β̂_k|) を計算して重み付きLassoを解く。
    連続する β の差が tol 以下、または重みベクトルが前回と一致したら停止する。

    Args:
        system: Gram系
        spec: ペナルティ設定
        initial: 初期推定量（通常はLasso解）
        options: ソルバー設定

    Returns:
        FitResult: iterations は外側反復数、weights は最後の内側問題の重み
    """
    opts = options or SolverOptions()
    beta = _check_length(system, initial.beta).copy()

    if spec.lam == 0.0:
        coef = ols(system, opts)
        zero_weights = np.zeros(system.n_terms)
        return FitResult(
            coefficients=coef,
            iterations=0,
            converged=True,
            objective=penalized_objective(system, coef.beta, spec, opts),
            kkt_residual=kkt_residual(system, coef.beta, zero_weights),
            weights=zero_weights,
        )

    history = [penalized_objective(system, beta, spec, opts)]
    previous_weights: np.ndarray | None = None
    last_fit: FitResult | None = None
    inner_total = 0
    outer = 0
    converged = False
    while outer < opts.max_outer:
        weights = _lla_weights(spec, beta, opts)
        if previous_weights is not None and np.array_equal(weights, previous_weights):
            converged = last_fit is not None and last_fit.converged
            break
        last_fit = weighted_lasso(system, weights, opts, initial=beta)
        outer += 1
        inner_total += last_fit.iterations
        change = float(np.max(np.abs(last_fit.beta - beta), initial=0.0))
        beta = last_fit.beta.copy()
        previous_weights = weights
        history.append(penalized_objective(system, beta, spec, opts))
        if change <= opts.tol:
            converged = last_fit.converged
            break

    assert last_fit is not None
    logger.debug("LLA finished after %d outer iterations (%d sweeps)", outer, inner_total)
    if not converged:
        logger.warning("LLA did not converge within %d outer iterations", opts.max_outer)
    return FitResult(
        coefficients=Coefficients(beta),
        iterations=outer,
        converged=converged,
        objective=history[-1],
        kkt_residual=last_fit.kkt_residual,
        weights=last_fit.weights,
        inner_iterations=inner_total,
        history=history,
    )


def fit_penalized(
    system: GramSystem,
    spec: PenaltySpec,
    options: SolverOptions | None = None,
    lambda0: float | None = None,
    lasso_initial: Sequence[float] | np.ndarray | None = None,
) -> tuple[FitResult, FitResult]:
    """Lasso初期値（λ₀、既定は λ₀ = λ）からLLAまでの2段階推定

    Returns:
        (Lasso解, 最終推定)。Lasso族では両者は同一。
    """
    opts = options or SolverOptions()
    lam0 = spec.lam if lambda0 is None else float(lambda0)
    initial_fit = lasso(system, lam0, opts, initial=lasso_initial)
    return initial_fit, refine_lasso(system, spec, initial_fit, lam0, opts)


def refine_lasso(
    system: GramSystem,
    spec: PenaltySpec,
    initial_fit: FitResult,
    lambda0: float,
    options: SolverOptions | None = None,
) -> FitResult:
    """λ₀ で得たLasso解を初期値にLLAを実行（Lasso族で λ₀ = λ なら初期解をそのまま返す）"""
    if spec.family is PenaltyFamily.LASSO and float(lambda0) == spec.lam:
        return initial_fit
    return lla(system, spec, initial_fit.coefficients, options)
