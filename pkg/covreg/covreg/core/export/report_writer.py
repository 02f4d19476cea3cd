"""結果ファイルの書き出し

CSVは浮動小数点を17有効桁で出力し、先頭に解決済み設定を `# ` コメントとして埋め込む。
YAMLは `config` キーに同じ設定を持つ。同じ設定・シードなら出力はバイト単位で一致する。
"""

from __future__ import annotations

import logging
from collections.abc import Mapping, Sequence
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
import yaml

from covreg.covreg.core.base.models import ZERO_TOL
from covreg.covreg.core.engine.config_model import RunConfig, resolved_yaml

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"
MISSING = "NA"


def config_header(config: RunConfig) -> str:
    """解決済み設定を `# ` 行にしたもの"""
    return "".join(f"# {line}\n" for line in resolved_yaml(config).splitlines())


def write_csv(path: str | Path, frame: pd.DataFrame, config: RunConfig | None = None) -> Path:
    """表をCSVで書き出す（設定ヘッダ付き）"""
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    body = frame.to_csv(index=False, float_format=FLOAT_FORMAT, na_rep=MISSING, lineterminator="\n")
    with open(out, "w", encoding="utf-8") as f:
        if config is not None:
            f.write(config_header(config))
        f.write(body)
    logger.debug("wrote %s (%d rows)", out, frame.shape[0])
    return out


def _plain(value: Any) -> Any:  # noqa: ANN401
    if isinstance(value, Mapping):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, np.generic):
        return value.item()
    return value


def write_yaml(path: str | Path, payload: Mapping[str, Any], config: RunConfig | None = None) -> Path:
    """辞書をYAMLで書き出す（`config` キーに解決済み設定）"""
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    document: dict[str, Any] = {}
    if config is not None:
        document["config"] = yaml.safe_load(resolved_yaml(config))
    document.update(_plain(payload))
    with open(out, "w", encoding="utf-8") as f:
        yaml.safe_dump(document, f, sort_keys=False, allow_unicode=True)
    logger.debug("wrote %s", out)
    return out


def coefficient_frame(
    beta: Sequence[float] | np.ndarray,
    terms: Sequence[str],
    standard_errors: Mapping[int, float] | None = None,
) -> pd.DataFrame:
    """係数表（index, term, beta, selected, se）"""
    coef = np.asarray(beta, dtype=np.float64)
    if len(terms) != coef.shape[0]:
        terms = [f"W{k}" for k in range(coef.shape[0])]
    errors = standard_errors or {}
    return pd.DataFrame(
        {
            "index": np.arange(coef.shape[0]),
            "term": list(terms),
            "beta": coef,
            "selected": np.abs(coef) > ZERO_TOL,
            "se": [errors.get(k, np.nan) for k in range(coef.shape[0])],
        }
    )
