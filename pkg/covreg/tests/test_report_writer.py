"""結果ファイル書き出しのテスト"""

import numpy as np
import pandas as pd
import yaml

from covreg.covreg.core.engine.config_model import RunConfig
from covreg.covreg.core.export.report_writer import (
    coefficient_frame,
    config_header,
    write_csv,
    write_yaml,
)


class TestWriteCsv:
    """CSV出力"""

    def test_header_then_table(self, tmp_path):
        config = RunConfig(seed=3)
        frame = pd.DataFrame({"a": [0.1, np.nan], "b": ["x", "y"]})
        path = write_csv(tmp_path / "sub" / "t.csv", frame, config)

        text = path.read_text()
        assert text.startswith(config_header(config))
        assert "seed: 3" in text
        body = [line for line in text.splitlines() if not line.startswith("#")]
        assert body == ["a,b", "0.10000000000000001,x", "NA,y"]

    def test_floats_survive_exactly(self, tmp_path):
        values = np.random.default_rng(0).standard_normal(20)
        path = write_csv(tmp_path / "v.csv", pd.DataFrame({"v": values}))
        np.testing.assert_array_equal(pd.read_csv(path)["v"].to_numpy(), values)

    def test_same_input_same_bytes(self, tmp_path):
        frame = pd.DataFrame({"v": [1.0 / 3.0, 2.0]})
        first = write_csv(tmp_path / "1.csv", frame, RunConfig()).read_bytes()
        second = write_csv(tmp_path / "2.csv", frame, RunConfig()).read_bytes()
        assert first == second


def test_write_yaml_puts_config_first(tmp_path):
    payload = {"lambda": np.float64(0.5), "support": np.array([0, 2]), "nested": {"k": np.int64(3)}}
    path = write_yaml(tmp_path / "fit.yaml", payload, RunConfig(seed=9))

    document = yaml.safe_load(path.read_text())
    assert list(document)[0] == "config"
    assert document["config"]["seed"] == 9
    assert document["lambda"] == 0.5
    assert document["support"] == [0, 2]
    assert document["nested"] == {"k": 3}


class TestCoefficientFrame:
    def test_columns_and_selection(self):
        frame = coefficient_frame([1.5, 0.0, -0.2], ["identity", "kernel:size", "edge:net"], {0: 0.1, 2: 0.05})

        assert list(frame.columns) == ["index", "term", "beta", "selected", "se"]
        assert frame["selected"].tolist() == [True, False, True]
        assert frame["se"].iloc[0] == 0.1
        assert np.isnan(frame["se"].iloc[1])

    def test_generic_term_names_when_lengths_differ(self):
        frame = coefficient_frame([1.0, 2.0], ["identity"])
        assert frame["term"].tolist() == ["W0", "W1"]
