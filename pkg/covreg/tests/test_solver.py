"""Gram系・座標降下・LLAソルバーのテスト"""

import numpy as np
import pytest

from covreg.covreg.core.base.errors import DataError, NumericalError
from covreg.covreg.core.base.matrices import densify
from covreg.covreg.core.base.models import Coefficients, GramSystem
from covreg.covreg.core.engine.penalty import PenaltyFamily, PenaltySpec
from covreg.covreg.core.engine.solver import (
    SolverOptions,
    assemble_gram,
    fit_penalized,
    kkt_residual,
    lasso,
    lasso_weights,
    lla,
    loss,
    ols,
    oracle_fit,
    penalized_objective,
    rss,
    weighted_lasso,
)
from covreg.covreg.core.engine.tuning import lambda_max
from covreg.tests.test_helpers import noiseless_system, random_basis, random_system


class TestAssembleGram:
    """Gram系の組み立て"""

    def test_matches_dense_definitions(self):
        rng = np.random.default_rng(0)
        basis = random_basis(rng, p=8, k=3)
        ys = rng.standard_normal((5, 8))
        system = assemble_gram(basis, ys)
        dense = [w.to_dense() for w in basis.matrices]

        for k in range(4):
            for l in range(4):
                assert system.gram[k, l] == pytest.approx(np.trace(dense[k] @ dense[l]), rel=1e-12)
            expected = np.mean(np.einsum("ij,jk,ik->i", ys, dense[k], ys))
            assert system.moments[k] == pytest.approx(expected, rel=1e-12, abs=1e-12)
        assert system.c == pytest.approx(np.mean(np.sum(ys**2, axis=1) ** 2))
        assert (system.p, system.n) == (8, 5)

    def test_rss_equals_frobenius_residual(self):
        """rss = n⁻¹Σ‖yyᵀ − Σ(β)‖_F² であること"""
        rng = np.random.default_rng(1)
        basis = random_basis(rng, p=6, k=2)
        ys = rng.standard_normal((3, 6))
        system = assemble_gram(basis, ys)
        beta = np.array([1.2, -0.4, 0.7])
        sigma = densify(basis, beta).data
        expected = np.mean([np.sum((np.outer(y, y) - sigma) ** 2) for y in ys])

        assert rss(system, beta) == pytest.approx(expected, rel=1e-10)
        assert loss(system, beta) == pytest.approx(expected / 12.0, rel=1e-10)

    def test_single_vector_is_one_observation(self):
        rng = np.random.default_rng(2)
        basis = random_basis(rng, p=5, k=1)
        assert assemble_gram(basis, rng.standard_normal(5)).n == 1

    def test_width_mismatch(self):
        rng = np.random.default_rng(3)
        with pytest.raises(DataError, match="does not match basis dimension"):
            assemble_gram(random_basis(rng, p=5, k=1), np.ones((2, 4)))

    def test_coefficient_length_checked(self):
        system = random_system(np.random.default_rng(4), 3)
        with pytest.raises(DataError, match="coefficient length"):
            rss(system, [1.0, 2.0])


class TestClosedForms:
    """OLS とオラクル推定"""

    def test_ols_solves_normal_equations(self):
        system = random_system(np.random.default_rng(5), 4)
        beta = ols(system).beta
        np.testing.assert_allclose(system.gram @ beta, system.moments, rtol=1e-10)

    def test_ols_rejects_singular_gram(self):
        gram = np.array([[2.0, 2.0], [2.0, 2.0]])
        system = GramSystem(gram=gram, moments=np.array([1.0, 1.0]), p=2, n=1, c=1.0)
        with pytest.raises(NumericalError, match="ill-conditioned|singular"):
            ols(system)

    def test_oracle_on_full_support_equals_ols(self):
        system = random_system(np.random.default_rng(6), 4)
        np.testing.assert_allclose(oracle_fit(system, [0, 1, 2, 3]).beta, ols(system).beta)

    def test_oracle_zero_outside_support(self):
        system = random_system(np.random.default_rng(7), 5)
        beta = oracle_fit(system, [3, 0]).beta
        assert beta[1] == beta[2] == beta[4] == 0.0
        sub = system.gram[np.ix_([0, 3], [0, 3])]
        np.testing.assert_allclose(sub @ beta[[0, 3]], system.moments[[0, 3]], rtol=1e-10)

    def test_oracle_support_validation(self):
        system = random_system(np.random.default_rng(8), 3)
        with pytest.raises(DataError, match="empty"):
            oracle_fit(system, [])
        with pytest.raises(DataError, match="out of range"):
            oracle_fit(system, [0, 3])


class TestWeightedLasso:
    """重み付きLassoの座標降下"""

    def test_zero_weights_reproduce_ols(self):
        system = random_system(np.random.default_rng(9), 5)
        fit = weighted_lasso(system, np.zeros(5))
        assert fit.converged
        np.testing.assert_allclose(fit.beta, ols(system).beta, atol=1e-6)

    def test_converged_fit_satisfies_kkt(self):
        rng = np.random.default_rng(10)
        system = random_system(rng, 8)
        weights = rng.uniform(0.0, 0.5, 8)
        fit = weighted_lasso(system, weights)

        assert fit.converged
        assert fit.kkt_residual <= 1e-6
        assert kkt_residual(system, fit.beta, weights) == fit.kkt_residual

    def test_large_weights_leave_only_unpenalized_intercept(self):
        system = random_system(np.random.default_rng(11), 4)
        weights = lasso_weights(4, 1e6)
        fit = weighted_lasso(system, weights)

        assert fit.support == (0,)
        assert fit.beta[0] == pytest.approx(system.moments[0] / system.gram[0, 0])

    def test_warm_start_reaches_same_solution(self):
        rng = np.random.default_rng(12)
        system = random_system(rng, 6)
        weights = lasso_weights(6, 0.1)
        cold = weighted_lasso(system, weights)
        warm = weighted_lasso(system, weights, initial=ols(system).beta)
        np.testing.assert_allclose(warm.beta, cold.beta, atol=1e-6)

    @pytest.mark.parametrize(("weight", "expected"), [(0.2, 0.3), (1.0, 0.0)])
    def test_scalar_soft_threshold(self, weight, expected):
        """Σ_W = [10], Σ_WY = [5], p = 10 では β = S(5, 10w) / 10"""
        system = GramSystem(gram=np.array([[10.0]]), moments=np.array([5.0]), p=10, n=1, c=4.0)
        fit = weighted_lasso(system, [weight])

        assert fit.converged
        assert fit.beta[0] == pytest.approx(expected, abs=1e-12)
        assert fit.kkt_residual == pytest.approx(0.0, abs=1e-10)

    def test_scalar_kkt_residual(self):
        system = GramSystem(gram=np.array([[10.0]]), moments=np.array([5.0]), p=10, n=1, c=4.0)
        assert kkt_residual(system, [0.3], [0.2]) == pytest.approx(0.0, abs=1e-10)
        # ∇Q_n(0.5) = 0 なので残差は重みそのもの
        assert kkt_residual(system, [0.5], [0.2]) == pytest.approx(0.2)
        # β = 0 では max(0, |−0.5| − 0.2)
        assert kkt_residual(system, [0.0], [0.2]) == pytest.approx(0.3)

    def test_invalid_weights(self):
        system = random_system(np.random.default_rng(13), 3)
        with pytest.raises(DataError, match="weight length"):
            weighted_lasso(system, [0.1, 0.1])
        with pytest.raises(DataError, match="nonnegative"):
            weighted_lasso(system, [0.1, -0.1, 0.1])

    def test_zero_similarity_matrix_in_basis(self):
        gram = np.array([[2.0, 0.0], [0.0, 0.0]])
        system = GramSystem(gram=gram, moments=np.array([1.0, 0.0]), p=2, n=1, c=1.0)
        with pytest.raises(NumericalError, match=r"Sigma_W\[1\]\[1\]"):
            weighted_lasso(system, [0.0, 0.1])

    def test_max_iter_exhaustion_reports_not_converged(self):
        system = random_system(np.random.default_rng(14), 6)
        fit = weighted_lasso(system, lasso_weights(6, 0.01), SolverOptions(max_iter=1, tol=1e-14))
        assert not fit.converged
        assert fit.iterations == 1


def test_brute_force_grid_never_beats_coordinate_descent():
    """K = 2 で 201³ グリッドの最小値以下の目的関数値に到達すること"""
    rng = np.random.default_rng(15)
    axis = np.linspace(-3.0, 3.0, 201)
    b1, b2 = np.meshgrid(axis, axis, indexing="ij")
    for _ in range(20):
        system = random_system(rng, 3, rows=12, p=4)
        weights = np.concatenate([[0.0], rng.uniform(0.0, 1.0, 2)])
        fit = weighted_lasso(system, weights)

        g, m = system.gram, system.moments
        best = np.inf
        for b0 in axis:
            quad = (
                g[0, 0] * b0**2
                + g[1, 1] * b1**2
                + g[2, 2] * b2**2
                + 2 * (g[0, 1] * b0 * b1 + g[0, 2] * b0 * b2 + g[1, 2] * b1 * b2)
            )
            linear = m[0] * b0 + m[1] * b1 + m[2] * b2
            objective = (system.c - 2 * linear + quad) / (2 * system.p)
            objective += weights[1] * np.abs(b1) + weights[2] * np.abs(b2)
            best = min(best, float(objective.min()))
        assert fit.objective <= best + 1e-6


class TestLLA:
    """局所線形近似"""

    @pytest.mark.parametrize("family", [PenaltyFamily.SCAD, PenaltyFamily.MCP])
    def test_outer_objective_is_nonincreasing(self, family):
        """200 個のランダムGram系で外側目的関数が単調非増加、最終KKT残差 ≤ 1e-6"""
        rng = np.random.default_rng(16 if family is PenaltyFamily.SCAD else 17)
        options = SolverOptions()
        for _ in range(100):
            n_terms = int(rng.integers(2, 22))
            system = random_system(rng, n_terms)
            lam = float(rng.uniform(0.05, 0.8)) * lambda_max(system)
            spec = PenaltySpec(family=family, lam=lam)
            lasso_fit, fit = fit_penalized(system, spec, options)

            history = np.array(fit.history)
            assert history[0] == pytest.approx(penalized_objective(system, lasso_fit.beta, spec))
            assert np.all(np.diff(history) <= 1e-8)
            assert fit.kkt_residual <= 1e-6

    @pytest.mark.parametrize("family", [PenaltyFamily.SCAD, PenaltyFamily.MCP])
    def test_zero_start_is_a_weighted_lasso(self, family):
        """β = 0 から1回の内側問題は重み p′_λ(0) の重み付きLassoと一致すること"""
        rng = np.random.default_rng(18)
        options = SolverOptions(max_outer=1)
        for _ in range(50):
            n_terms = int(rng.integers(2, 12))
            system = random_system(rng, n_terms)
            lam = 0.3 * lambda_max(system)
            spec = PenaltySpec(family=family, lam=lam)

            fit = lla(system, spec, Coefficients.zeros(n_terms), options)
            direct = weighted_lasso(system, lasso_weights(n_terms, lam), options)

            np.testing.assert_allclose(fit.beta, direct.beta, atol=1e-8)

    @pytest.mark.parametrize("family", [PenaltyFamily.SCAD, PenaltyFamily.MCP])
    def test_lasso_start_reaches_oracle(self, family):
        """オラクル解が γλ を超え、サポート外の勾配に余裕がある系ではオラクル解に一致すること"""
        rng = np.random.default_rng(19)
        options = SolverOptions(tol=1e-12, kkt_tol=1e-10)
        lam = 0.05
        spec = PenaltySpec(family=family, lam=lam)
        for _ in range(50):
            truth = np.zeros(9)
            truth[[0, 1, 2]] = [3.0, 2.0, -2.5]
            system, _ = noiseless_system(rng, truth, noise=1e-3)
            oracle = oracle_fit(system, [0, 1, 2], options).beta
            gradient = (system.gram @ oracle - system.moments) / system.p
            assert np.min(np.abs(oracle[[1, 2]])) > spec.gamma * lam
            assert np.max(np.abs(gradient[3:])) < lam

            _, fit = fit_penalized(system, spec, options)

            assert fit.support == (0, 1, 2)
            np.testing.assert_allclose(fit.beta, oracle, atol=1e-8)

    def test_zero_lambda_returns_ols(self):
        system = random_system(np.random.default_rng(20), 4)
        fit = lla(system, PenaltySpec(lam=0.0), Coefficients.zeros(4))
        np.testing.assert_allclose(fit.beta, ols(system).beta)
        assert fit.iterations == 0

    def test_lasso_family_returns_initial_fit(self):
        system = random_system(np.random.default_rng(21), 4)
        spec = PenaltySpec(family="lasso", lam=0.2 * lambda_max(system))
        first, final = fit_penalized(system, spec)
        assert first is final
        np.testing.assert_allclose(final.beta, lasso(system, spec.lam).beta)

    def test_penalized_objective_skips_intercept(self):
        system = random_system(np.random.default_rng(22), 3)
        spec = PenaltySpec(family="lasso", lam=0.5)
        beta = np.array([10.0, 1.0, -2.0])
        assert penalized_objective(system, beta, spec) == pytest.approx(loss(system, beta) + 1.5)
        with_intercept = SolverOptions(unpenalized_intercept=False)
        assert penalized_objective(system, beta, spec, with_intercept) == pytest.approx(loss(system, beta) + 6.5)
