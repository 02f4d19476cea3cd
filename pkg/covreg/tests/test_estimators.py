"""共分散推定手法レジストリのテスト"""

import numpy as np
import pytest

from covreg.covreg.core.base.errors import DataError
from covreg.covreg.core.base.matrices import SimilarityBasis
from covreg.covreg.core.engine.estimators import (
    ESTIMATORS,
    EstimatorContext,
    build_estimators,
    get_estimator,
)
from covreg.covreg.core.engine.factor import sample_covariance
from covreg.covreg.core.engine.portfolio import TrainingWindow
from covreg.covreg.core.engine.similarity import kernel_similarity, outerproduct_similarity

P = 6


@pytest.fixture
def window():
    rng = np.random.default_rng(0)
    factors = rng.standard_normal((30, 1))
    loadings = rng.uniform(0.5, 1.5, (1, P))
    returns = factors @ loadings + 0.5 * rng.standard_normal((30, P))
    return TrainingWindow(index=0, returns=returns, factors=factors)


@pytest.fixture
def context():
    x = np.linspace(-1.0, 1.0, P)
    basis = SimilarityBasis.with_identity([kernel_similarity(x, bandwidth=3.0), outerproduct_similarity(x)], P)
    characteristics = np.column_stack([np.ones(P), x])
    return EstimatorContext(basis=basis, n_lambda=6, characteristics=characteristics)


@pytest.mark.parametrize("name", sorted(ESTIMATORS))
def test_every_method_returns_symmetric_covariance(name, window, context):
    """全手法が p×p の対称行列を返すこと"""
    sigma = get_estimator(name, context)(window).sigma
    assert sigma.dim == P
    np.testing.assert_array_equal(sigma.data, sigma.data.T)
    assert np.all(np.isfinite(sigma.data))


def test_sample_method_is_sample_covariance(window, context):
    sigma = get_estimator("sample", context)(window).sigma
    np.testing.assert_array_equal(sigma.data, sample_covariance(window.returns).data)


def test_identity_method(window, context):
    np.testing.assert_array_equal(get_estimator("identity", context)(window).sigma.data, np.eye(P))


def test_lw_shrinks_towards_scaled_identity(window, context):
    sample = sample_covariance(window.returns).data
    shrunk = get_estimator("lw", context)(window).sigma.data
    off = ~np.eye(P, dtype=bool)
    assert np.sum(np.abs(shrunk[off])) <= np.sum(np.abs(sample[off]))
    assert np.trace(shrunk) == pytest.approx(np.trace(sample))


@pytest.mark.parametrize("name", ["scr", "scr_mcp", "factor_scr", "cbf_scr", "scr_lw"])
def test_scr_methods_report_selected_terms(name, window, context):
    """SCR系は選ばれた類似度行列の添字を返し、切片を含む"""
    support = get_estimator(name, context)(window).support
    assert support is not None
    assert 0 in support
    assert all(0 <= k < context.basis.n_terms for k in support)


@pytest.mark.parametrize("name", ["sample", "identity", "lw", "ols", "factor", "cbf"])
def test_other_methods_report_no_selection(name, window, context):
    assert get_estimator(name, context)(window).support is None


class TestMissingInputs:
    """必要な入力がない場合のエラー"""

    @pytest.mark.parametrize("name", ["scr", "scr_mcp", "ols", "factor_scr", "scr_lw"])
    def test_basis_required(self, name, window):
        with pytest.raises(DataError, match="needs a similarity basis"):
            get_estimator(name, EstimatorContext())(window)

    @pytest.mark.parametrize("name", ["factor", "factor_scr"])
    def test_factors_required(self, name, window, context):
        bare = TrainingWindow(index=0, returns=window.returns)
        with pytest.raises(DataError, match="factor file"):
            get_estimator(name, context)(bare)

    @pytest.mark.parametrize("name", ["cbf", "cbf_scr"])
    def test_characteristics_required(self, name, window):
        with pytest.raises(DataError, match="characteristics"):
            get_estimator(name, EstimatorContext())(window)


def test_unknown_method(context):
    with pytest.raises(DataError, match="unknown covariance method 'nope'"):
        get_estimator("nope", context)


def test_build_estimators_keeps_order(context):
    estimators = build_estimators(["lw", "sample", "scr"], context)
    assert list(estimators) == ["lw", "sample", "scr"]


def test_build_estimators_rejects_empty(context):
    with pytest.raises(DataError, match="no covariance methods"):
        build_estimators([], context)
