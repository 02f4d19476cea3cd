"""covreg.core.engine: 類似度構築・推定・調整・推論・評価"""

from .penalty import PenaltyFamily, PenaltySpec
from .solver import SolverOptions, assemble_gram, fit_penalized, lla, ols, oracle_fit, refine_lasso, weighted_lasso
from .tuning import PairTuningResult, TuningResult, bic_score, default_lambda_grid, select_lambda, select_lambda_pair

__all__ = [
    "PairTuningResult",
    "PenaltyFamily",
    "PenaltySpec",
    "SolverOptions",
    "TuningResult",
    "assemble_gram",
    "bic_score",
    "default_lambda_grid",
    "fit_penalized",
    "lla",
    "ols",
    "oracle_fit",
    "refine_lasso",
    "select_lambda",
    "select_lambda_pair",
    "weighted_lasso",
]
