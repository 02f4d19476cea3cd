"""RunConfig のロードとフラグ上書きのテスト"""

from pathlib import Path

import pytest
import yaml

from covreg.covreg.core.base.errors import ConfigError, DataError
from covreg.covreg.core.engine.config_model import (
    RunConfig,
    apply_overrides,
    load_config,
    resolved_yaml,
)
from covreg.covreg.core.engine.penalty import PenaltyFamily
from covreg.covreg.core.engine.simulate import Method, ZDist

REPO_ROOT = Path(__file__).resolve().parents[2]


@pytest.fixture
def write_config(tmp_path):
    """辞書を一時YAMLに書き出すヘルパー"""

    def _write(data, name="config.yaml"):
        path = tmp_path / name
        path.write_text(yaml.safe_dump(data))
        return path

    return _write


class TestLoadConfig:
    """設定YAMLのロード"""

    def test_none_gives_defaults(self):
        config = load_config(None)
        assert config.penalty.family is PenaltyFamily.SCAD
        assert config.penalty.gamma == 3.7
        assert config.tuning.n_lambda == 50
        assert config.out == Path("out")

    def test_bundled_toy_config(self):
        config = load_config(REPO_ROOT / "configs" / "toy.yaml")
        assert config.data.returns == Path("data/toy/returns.csv")
        assert config.data.labels == [Path("data/toy/labels.csv")]
        assert config.basis.outerproduct
        assert config.penalty.lam == 0.05
        assert config.seed == 7
        assert config.simulate.dgp.seed == 7

    def test_bundled_simulation_config(self):
        config = load_config(REPO_ROOT / "configs" / "simulate-mixture.yaml")
        assert config.simulate.dgp.z_dist is ZDist.MIXTURE_NORMAL
        assert Method.LASSO in config.simulate.methods

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="Config file not found"):
            load_config(tmp_path / "missing.yaml")

    def test_yaml_syntax_error(self, tmp_path):
        path = tmp_path / "broken.yaml"
        path.write_text("penalty: [scad\n")
        with pytest.raises(ConfigError, match="YAML parse error"):
            load_config(path)

    def test_unknown_key_rejected(self, write_config):
        with pytest.raises(ConfigError, match="invalid configuration"):
            load_config(write_config({"basis": {"kernal": True}}))

    def test_gamma_range_reported_as_config_error(self, write_config):
        with pytest.raises(ConfigError, match="requires gamma"):
            load_config(write_config({"penalty": {"family": "mcp", "gamma": 0.5}}))

    def test_config_error_is_data_error(self):
        assert issubclass(ConfigError, DataError)
        assert ConfigError.exit_code == 1

    def test_empty_file_gives_defaults(self, tmp_path):
        path = tmp_path / "empty.yaml"
        path.write_text("")
        assert load_config(path).seed == 0


class TestSharedSettings:
    def test_seed_and_threads_propagate(self, write_config):
        config = load_config(write_config({"seed": 11, "threads": 3, "simulate": {"dgp": {"seed": 99}}}))
        assert config.simulate.dgp.seed == 11
        assert config.simulate.threads == 3
        assert config.backtest.threads == 3


class TestApplyOverrides:
    """フラグによる上書き"""

    def test_dotted_keys(self):
        config = apply_overrides(RunConfig(), {"penalty.lambda": 0.2, "simulate.dgp.p": 50, "out": "elsewhere"})
        assert config.penalty.lam == 0.2
        assert config.simulate.dgp.p == 50
        assert config.out == Path("elsewhere")

    def test_none_values_are_ignored(self):
        config = apply_overrides(RunConfig(seed=5), {"seed": None, "tuning.n_lambda": None})
        assert config.seed == 5
        assert config.tuning.n_lambda == 50

    def test_flags_win_over_file(self, write_config):
        config = load_config(write_config({"backtest": {"window": 24}}))
        assert apply_overrides(config, {"backtest.window": 12}).backtest.window == 12

    def test_seed_override_reaches_dgp(self):
        assert apply_overrides(RunConfig(), {"seed": 42}).simulate.dgp.seed == 42

    def test_family_switch_uses_new_default_gamma(self, write_config):
        """族を変え γ を指定しない場合、元の族の γ で検証せず新しい族の既定値を使うこと"""
        config = load_config(write_config({"penalty": {"family": "mcp"}}))
        assert config.penalty.gamma == 1.5

        switched = apply_overrides(config, {"penalty.family": "scad", "penalty.gamma": None})
        assert switched.penalty.family is PenaltyFamily.SCAD
        assert switched.penalty.gamma == 3.7
        assert apply_overrides(config, {"penalty.family": "lasso"}).penalty.gamma is None

    def test_same_family_keeps_custom_gamma(self, write_config):
        config = load_config(write_config({"penalty": {"family": "scad", "gamma": 3.0}}))
        assert apply_overrides(config, {"penalty.family": "SCAD"}).penalty.gamma == 3.0

    def test_explicit_gamma_wins_over_family_default(self, write_config):
        config = load_config(write_config({"penalty": {"family": "mcp"}}))
        assert apply_overrides(config, {"penalty.family": "scad", "penalty.gamma": 5.0}).penalty.gamma == 5.0

    def test_unknown_section(self):
        with pytest.raises(ConfigError, match="unknown configuration section 'bogus'"):
            apply_overrides(RunConfig(), {"bogus.value": 1})

    def test_invalid_value(self):
        with pytest.raises(ConfigError, match="flag overrides"):
            apply_overrides(RunConfig(), {"tuning.min_ratio": 2.0})


def test_resolved_yaml_reloads_to_same_config(tmp_path):
    config = apply_overrides(RunConfig(), {"penalty.family": "mcp", "penalty.gamma": 2.5, "seed": 3})
    path = tmp_path / "resolved.yaml"
    path.write_text(resolved_yaml(config))

    reloaded = load_config(path)
    assert reloaded.model_dump() == config.model_dump()
    assert "lambda" in yaml.safe_load(path.read_text())["penalty"]
