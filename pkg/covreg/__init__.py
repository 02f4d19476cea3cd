"""covreg: 類似度行列による疎共分散回帰

共分散行列を類似度行列の疎な線形結合として推定するライブラリとCLI。
"""

__version__ = "0.1.0"
