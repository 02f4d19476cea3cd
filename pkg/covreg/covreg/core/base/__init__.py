"""covreg.core.base: 行列表現・結果データ・例外

純粋なデータ定義（最下層）
"""

from .errors import ConfigError, CovregError, DataError, NumericalError
from .matrices import (
    DenseSymMatrix,
    MatrixKind,
    SimilarityBasis,
    SparseSymMatrix,
    densify,
    quad_form,
    quad_forms,
    read_triplets,
    sparse_from_triplets,
    symmetric_sqrt,
    triplets_from_arrays,
    trace_product,
)
from .models import ZERO_TOL, Coefficients, FitResult, GramSystem

__all__ = [
    # errors
    "ConfigError",
    "CovregError",
    "DataError",
    "NumericalError",
    # matrices
    "DenseSymMatrix",
    "MatrixKind",
    "SimilarityBasis",
    "SparseSymMatrix",
    "densify",
    "quad_form",
    "quad_forms",
    "read_triplets",
    "sparse_from_triplets",
    "symmetric_sqrt",
    "triplets_from_arrays",
    "trace_product",
    # models
    "ZERO_TOL",
    "Coefficients",
    "FitResult",
    "GramSystem",
]
