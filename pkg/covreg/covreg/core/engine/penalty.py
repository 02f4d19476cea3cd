"""ペナルティ関数 p_λ(|t|) とその導関数

LLAの重み更新 ŵ_k = p′_λ(|β_k|) で使う。引数は |β_k| を想定し、
負の入力は呼び出し側のバグとしてエラーにする。
"""

from __future__ import annotations

from enum import StrEnum
from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class PenaltyFamily(StrEnum):
    """ペナルティ族"""

    LASSO = "lasso"
    SCAD = "scad"
    MCP = "mcp"


DEFAULT_GAMMA: dict[PenaltyFamily, float] = {
    PenaltyFamily.SCAD: 3.7,
    PenaltyFamily.MCP: 1.5,
}

# 族ごとの γ の下限（厳密不等号）
_GAMMA_LOWER: dict[PenaltyFamily, float] = {
    PenaltyFamily.SCAD: 2.0,
    PenaltyFamily.MCP: 1.0,
}


class PenaltySpec(BaseModel):
    """ペナルティ設定

    Attributes:
        family: ペナルティ族
        lam: 正則化パラメータ λ（設定キーは `lambda`）
        gamma: 凹性パラメータ γ（SCAD: γ > 2, MCP: γ > 1, Lassoは無視）
    """

    model_config = ConfigDict(frozen=True, populate_by_name=True)

    family: PenaltyFamily = PenaltyFamily.SCAD
    lam: float = Field(default=0.0, ge=0.0, alias="lambda")
    gamma: float | None = None

    @field_validator("family", mode="before")
    @classmethod
    def _normalize_family(cls, value: Any) -> Any:  # noqa: ANN401
        return value.lower() if isinstance(value, str) else value

    @model_validator(mode="before")
    @classmethod
    def _fill_default_gamma(cls, data: Any) -> Any:  # noqa: ANN401
        if not isinstance(data, dict) or data.get("gamma") is not None:
            return data
        family = str(data.get("family", PenaltyFamily.SCAD)).lower()
        if family in DEFAULT_GAMMA:
            return {**data, "gamma": DEFAULT_GAMMA[PenaltyFamily(family)]}
        return data

    @model_validator(mode="after")
    def _check_gamma_range(self) -> PenaltySpec:
        lower = _GAMMA_LOWER.get(self.family)
        if lower is not None and (self.gamma is None or not self.gamma > lower):
            raise ValueError(f"{self.family.value} requires gamma > {lower}, got {self.gamma}")
        return self

    @property
    def a1(self) -> float:
        """性質(ii)(iii)の定数 a₁"""
        if self.family is PenaltyFamily.MCP:
            assert self.gamma is not None
            return 1.0 - 1.0 / self.gamma
        return 1.0

    @property
    def a2(self) -> float:
        """性質(iii)の定数 a₂"""
        return float("inf") if self.family is PenaltyFamily.LASSO else 1.0

    def with_lambda(self, lam: float) -> PenaltySpec:
        return self.model_copy(update={"lam": float(lam)})


def _as_magnitudes(t: float | np.ndarray) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(t, dtype=np.float64))
    if np.any(arr < 0.0) or not np.all(np.isfinite(arr)):
        raise ValueError("penalty arguments must be finite and nonnegative (pass |beta_k|)")
    return arr


def penalty_values(spec: PenaltySpec, t: float | np.ndarray) -> np.ndarray:
    """p_λ(t) のベクトル版"""
    arr = _as_magnitudes(t)
    lam = spec.lam
    if spec.family is PenaltyFamily.LASSO:
        return lam * arr
    assert spec.gamma is not None
    gamma = spec.gamma
    if spec.family is PenaltyFamily.SCAD:
        return np.select(
            [arr <= lam, arr <= gamma * lam],
            [lam * arr, (2.0 * gamma * lam * arr - arr**2 - lam**2) / (2.0 * (gamma - 1.0))],
            default=lam**2 * (gamma**2 - 1.0) / (2.0 * (gamma - 1.0)),
        )
    return np.where(arr <= gamma * lam, lam * arr - arr**2 / (2.0 * gamma), gamma * lam**2 / 2.0)


def penalty_derivs(spec: PenaltySpec, t: float | np.ndarray) -> np.ndarray:
    """p′_λ(t) のベクトル版（t = 0 は右微分 p′_λ(0+)）"""
    arr = _as_magnitudes(t)
    lam = spec.lam
    if spec.family is PenaltyFamily.LASSO:
        return np.full(arr.shape, lam)
    assert spec.gamma is not None
    gamma = spec.gamma
    if spec.family is PenaltyFamily.SCAD:
        return np.select(
            [arr <= lam, arr <= gamma * lam],
            [np.full(arr.shape, lam), (gamma * lam - arr) / (gamma - 1.0)],
            default=0.0,
        )
    return np.where(arr <= gamma * lam, lam - arr / gamma, 0.0)


def penalty_value(spec: PenaltySpec, t: float) -> float:
    """p_λ(t)

    Raises:
        ValueError: t < 0
    """
    return float(penalty_values(spec, t)[0])


def penalty_deriv(spec: PenaltySpec, t: float) -> float:
    """p′_λ(t)

    Raises:
        ValueError: t < 0
    """
    return float(penalty_derivs(spec, t)[0])
