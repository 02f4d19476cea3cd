"""実行設定（RunConfig）のモデル定義とロード機能

設定YAMLを読み込み、CLIフラグをドット区切りキーで上書きしてから再検証する。
フラグは設定ファイルより優先される。
"""

from __future__ import annotations

from collections.abc import Mapping
from pathlib import Path
from typing import Any

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from covreg.covreg.core.base.errors import ConfigError
from covreg.covreg.core.engine.penalty import PenaltySpec
from covreg.covreg.core.engine.portfolio import BacktestSettings
from covreg.covreg.core.engine.simulate import DgpConfig, SimulationSettings
from covreg.covreg.core.engine.solver import SolverOptions
from covreg.covreg.core.engine.tuning import DEFAULT_LAMBDA_MIN_RATIO, DEFAULT_N_LAMBDA


class DataSection(BaseModel):
    """入力ファイル

    Attributes:
        returns: 収益率（応答）CSV
        covariates: 共変量CSV（行 = 主体）
        labels: `subject,label` CSV（複数可）
        edges: `i j` 辺リスト（複数可）
        triplets: `i j value` 類似度行列（複数可）
        factors: ファクターCSV（行 = 期）
        characteristics: CBFの既知ローディングCSV（行 = 資産）
        marketcap: 時価総額CSV（資産順）
    """

    model_config = ConfigDict(extra="forbid")

    returns: Path | None = None
    covariates: Path | None = None
    labels: list[Path] = Field(default_factory=list)
    edges: list[Path] = Field(default_factory=list)
    triplets: list[Path] = Field(default_factory=list)
    factors: Path | None = None
    characteristics: Path | None = None
    marketcap: Path | None = None


class BasisSection(BaseModel):
    """類似度基底の構築設定"""

    model_config = ConfigDict(extra="forbid")

    kernel: bool = True
    outerproduct: bool = False
    correlated: bool = False
    bandwidth: float = Field(default=10.0, gt=0.0)
    density: float = Field(default=1.0, gt=0.0, le=1.0)
    rescale: bool = True
    standardize: bool = True


class TuningSection(BaseModel):
    """λ グリッド設定（grid を指定すると n_lambda / min_ratio は無視）

    separate_lambda0 では Lasso初期値の λ₀ も同じグリッドから BIC で選ぶ。
    """

    model_config = ConfigDict(extra="forbid")

    grid: list[float] | None = None
    n_lambda: int = Field(default=DEFAULT_N_LAMBDA, ge=1)
    min_ratio: float = Field(default=DEFAULT_LAMBDA_MIN_RATIO, gt=0.0, lt=1.0)
    warm_start: bool = True
    separate_lambda0: bool = False


class SimulateSection(SimulationSettings):
    """シミュレーション設定（dgp.seed は top-level の seed に揃える）"""

    dgp: DgpConfig = Field(default_factory=DgpConfig)


class BacktestSection(BacktestSettings):
    """バックテスト設定"""

    methods: list[str] = Field(default_factory=lambda: ["sample", "lw", "scr"])


class RunConfig(BaseModel):
    """実行設定全体"""

    model_config = ConfigDict(extra="forbid")

    data: DataSection = Field(default_factory=DataSection)
    basis: BasisSection = Field(default_factory=BasisSection)
    penalty: PenaltySpec = Field(default_factory=PenaltySpec)
    solver: SolverOptions = Field(default_factory=SolverOptions)
    tuning: TuningSection = Field(default_factory=TuningSection)
    simulate: SimulateSection = Field(default_factory=SimulateSection)
    backtest: BacktestSection = Field(default_factory=BacktestSection)
    seed: int = 0
    threads: int = Field(default=1, ge=1)
    out: Path = Path("out")

    @model_validator(mode="after")
    def _sync_shared(self) -> RunConfig:
        # seed / threads は top-level の値が各セクションに優先する
        dgp = self.simulate.dgp.model_copy(update={"seed": self.seed})
        self.simulate = self.simulate.model_copy(update={"dgp": dgp, "threads": self.threads})
        self.backtest = self.backtest.model_copy(update={"threads": self.threads})
        return self


def _validate(data: Any, source: str) -> RunConfig:  # noqa: ANN401
    try:
        return RunConfig.model_validate(data or {})
    except ValidationError as exc:
        raise ConfigError(f"invalid configuration ({source}): {exc}") from exc


def load_config(config_path: str | Path | None) -> RunConfig:
    """設定YAMLをロードして検証（None なら既定値）

    Raises:
        ConfigError: ファイルが存在しない、YAML形式エラー、検証エラー
    """
    if config_path is None:
        return RunConfig()
    config_path_obj = Path(config_path)
    if not config_path_obj.exists():
        raise ConfigError(f"Config file not found: {config_path}")
    try:
        with open(config_path_obj) as f:
            data = yaml.safe_load(f)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{config_path_obj.name}: YAML parse error: {exc}") from exc
    return _validate(data, config_path_obj.name)


def apply_overrides(config: RunConfig, overrides: Mapping[str, Any]) -> RunConfig:
    """ドット区切りキー（例: `penalty.gamma`）で値を上書きして再検証

    None の値は無視する。`penalty.family` で族が変わり `penalty.gamma` の指定がなければ、
    γ は新しい族の既定値になる。

    Raises:
        ConfigError: 存在しないセクション、検証エラー
    """
    data = config.model_dump(mode="json", by_alias=True)
    family = overrides.get("penalty.family")
    if family is not None and overrides.get("penalty.gamma") is None:
        if str(family).lower() != config.penalty.family.value:
            data["penalty"].pop("gamma", None)
    for dotted, value in overrides.items():
        if value is None:
            continue
        *parents, leaf = dotted.split(".")
        node = data
        for key in parents:
            child = node.get(key)
            if not isinstance(child, dict):
                raise ConfigError(f"unknown configuration section '{key}' in override '{dotted}'")
            node = child
        node[leaf] = value
    return _validate(data, "flag overrides")


def resolved_yaml(config: RunConfig) -> str:
    """既定値を含む解決済み設定のYAML"""
    return yaml.safe_dump(config.model_dump(mode="json", by_alias=True), sort_keys=False, allow_unicode=True)
