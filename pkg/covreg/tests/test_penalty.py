"""ペナルティ関数のテスト（区分ごとの値・導関数と設定モデル）"""

import numpy as np
import pytest
from pydantic import ValidationError

from covreg.covreg.core.engine.penalty import (
    DEFAULT_GAMMA,
    PenaltyFamily,
    PenaltySpec,
    penalty_deriv,
    penalty_derivs,
    penalty_value,
    penalty_values,
)

SCAD = PenaltySpec(family="scad", lam=1.0, gamma=3.7)
MCP = PenaltySpec(family="mcp", lam=1.0, gamma=1.5)
LASSO = PenaltySpec(family="lasso", lam=0.5)

# (spec, t, p_λ(t), p'_λ(t))：区分の境界をまたぐ手計算値
HAND_TABLE = [
    (SCAD, 0.0, 0.0, 1.0),
    (SCAD, 0.5, 0.5, 1.0),
    (SCAD, 1.0, 1.0, 1.0),
    (SCAD, 2.0, 9.8 / 5.4, 1.7 / 2.7),
    (SCAD, 3.7, 12.69 / 5.4, 0.0),
    (SCAD, 5.0, 12.69 / 5.4, 0.0),
    (MCP, 0.0, 0.0, 1.0),
    (MCP, 1.0, 2.0 / 3.0, 1.0 / 3.0),
    (MCP, 1.5, 0.75, 0.0),
    (MCP, 3.0, 0.75, 0.0),
    (LASSO, 0.0, 0.0, 0.5),
    (LASSO, 4.0, 2.0, 0.5),
]


@pytest.mark.parametrize(("spec", "t", "value", "deriv"), HAND_TABLE)
def test_hand_computed_values(spec, t, value, deriv):
    """境界をまたぐ入力で手計算値と一致すること"""
    assert penalty_value(spec, t) == pytest.approx(value, abs=1e-12)
    assert penalty_deriv(spec, t) == pytest.approx(deriv, abs=1e-12)


@pytest.mark.parametrize("spec", [SCAD, MCP, LASSO])
def test_derivative_matches_finite_difference(spec):
    """区分の境界以外では中心差分と一致すること"""
    h = 1e-6
    for t in [0.3, 0.9, 1.2, 1.45, 2.4, 3.2, 4.5, 6.0]:
        numeric = (penalty_value(spec, t + h) - penalty_value(spec, t - h)) / (2 * h)
        assert penalty_deriv(spec, t) == pytest.approx(numeric, abs=1e-6)


@pytest.mark.parametrize("spec", [SCAD, MCP])
def test_folded_concave_properties(spec):
    """p′ は非増加、p′(0+) = λ、γλ 以降は0であること"""
    grid = np.linspace(0.0, 3 * spec.gamma * spec.lam, 301)
    derivs = penalty_derivs(spec, grid)

    assert derivs[0] == spec.lam
    assert np.all(np.diff(derivs) <= 1e-15)
    assert np.all(derivs[grid >= spec.gamma * spec.lam] == 0.0)
    assert np.all(np.diff(penalty_values(spec, grid)) >= -1e-12)


def test_vectorized_matches_scalar():
    t = np.array([0.0, 0.7, 2.5, 8.0])
    expected = [penalty_value(SCAD, float(v)) for v in t]
    np.testing.assert_allclose(penalty_values(SCAD, t), expected)


def test_negative_argument_rejected():
    with pytest.raises(ValueError, match="nonnegative"):
        penalty_value(SCAD, -0.1)


class TestPenaltySpec:
    """ペナルティ設定モデル"""

    def test_default_gamma_per_family(self):
        assert PenaltySpec().gamma == DEFAULT_GAMMA[PenaltyFamily.SCAD] == 3.7
        assert PenaltySpec(family="mcp").gamma == DEFAULT_GAMMA[PenaltyFamily.MCP] == 1.5
        assert PenaltySpec(family="lasso").gamma is None

    def test_family_is_case_insensitive(self):
        assert PenaltySpec(family="MCP").family is PenaltyFamily.MCP

    def test_lambda_alias(self):
        spec = PenaltySpec.model_validate({"family": "scad", "lambda": 0.25})
        assert spec.lam == 0.25
        assert spec.model_dump(by_alias=True)["lambda"] == 0.25

    @pytest.mark.parametrize(("family", "gamma"), [("scad", 2.0), ("mcp", 1.0), ("scad", 1.5)])
    def test_gamma_range_enforced(self, family, gamma):
        with pytest.raises(ValidationError, match="requires gamma"):
            PenaltySpec(family=family, gamma=gamma)

    def test_negative_lambda_rejected(self):
        with pytest.raises(ValidationError):
            PenaltySpec(lam=-1.0)

    def test_constants(self):
        assert MCP.a1 == pytest.approx(1.0 - 1.0 / 1.5)
        assert SCAD.a1 == 1.0
        assert SCAD.a2 == 1.0
        assert LASSO.a2 == float("inf")

    def test_with_lambda_keeps_family_and_gamma(self):
        spec = MCP.with_lambda(0.3)
        assert spec.lam == 0.3
        assert spec.family is PenaltyFamily.MCP
        assert spec.gamma == 1.5
