"""例外階層

エンジン層は例外を送出するのみで、終了コードへの変換はCLI（main.py）が行う。

- DataError: 入力データ・次元・ファイル形式の不正（exit 1）
- NumericalError: 特異行列・非正定値・ソルバー破綻（exit 2）
"""

from __future__ import annotations


class CovregError(Exception):
    """covreg全体の基底例外"""

    exit_code: int = 1


class DataError(CovregError):
    """入力データの不正（次元不一致、不正ファイル、範囲外インデックス等）"""

    exit_code = 1


class ConfigError(DataError):
    """RunConfigの検証エラー"""

    pass


class NumericalError(CovregError):
    """数値計算の失敗（特異Gram行列、非正定値共分散等）"""

    exit_code = 2
