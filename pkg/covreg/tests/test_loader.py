"""CSV・辺リストのロードと基底構築のテスト"""

import logging
from pathlib import Path

import numpy as np
import pytest

from covreg.covreg.core.base.errors import DataError
from covreg.covreg.core.base.matrices import MatrixKind
from covreg.covreg.core.engine.config_model import RunConfig
from covreg.covreg.core.engine.loader import (
    build_basis,
    build_design,
    load_edges,
    load_labels,
    load_market_caps,
    load_panel,
)
from covreg.tests.test_helpers import FIXTURES

REPO_ROOT = Path(__file__).resolve().parents[2]
NAMES = ["A", "B", "C", "D"]


class TestLoadPanel:
    """数値CSV"""

    def test_reads_values_and_header(self):
        panel = load_panel(FIXTURES / "returns_2x2.csv")
        assert panel.names == ["x", "y"]
        np.testing.assert_array_equal(panel.values, [[1.5, 2.0], [-3.0, 4.25]])
        assert panel.shape == (2, 2)

    def test_bundled_toy_returns(self):
        panel = load_panel(REPO_ROOT / "data" / "toy" / "returns.csv")
        assert panel.shape == (72, 12)
        assert panel.names[0] == "A01"

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError, match="File not found"):
            load_panel(tmp_path / "none.csv")

    def test_header_only(self):
        with pytest.raises(DataError, match="no data rows"):
            load_panel(FIXTURES / "header_only.csv")

    def test_non_numeric_cell_position(self):
        with pytest.raises(DataError, match=r"non-numeric cell 'NA' at \(3, 2\)"):
            load_panel(FIXTURES / "returns_na.csv")

    def test_short_row(self):
        with pytest.raises(DataError, match="ragged row 2"):
            load_panel(FIXTURES / "ragged.csv")

    def test_long_row(self, tmp_path):
        path = tmp_path / "long.csv"
        path.write_text("A,B\n1,2\n3,4,5\n")
        with pytest.raises(DataError, match="ragged rows"):
            load_panel(path)

    def test_non_finite_value(self):
        with pytest.raises(DataError, match=r"invalid value .* at \(1, 2\)"):
            load_panel(FIXTURES / "returns_inf.csv")


class TestLoadLabels:
    def test_by_asset_name(self):
        assert load_labels(FIXTURES / "labels.csv", 4, NAMES) == ["tech", "bank", "tech", "bank"]

    def test_by_index_with_missing_subject(self):
        assert load_labels(FIXTURES / "labels_indexed.csv", 4) == ["x", None, "x", "y"]

    def test_index_out_of_range(self):
        with pytest.raises(DataError, match=r"indices in \[0, 3\)"):
            load_labels(FIXTURES / "labels_indexed.csv", 3)

    def test_wrong_column_count(self):
        with pytest.raises(DataError, match="expected 2 columns"):
            load_labels(FIXTURES / "returns_na.csv", 4)


class TestLoadEdges:
    def test_duplicates_collapse_and_comments_skipped(self):
        assert sorted(load_edges(FIXTURES / "edges.txt")) == [(0, 1), (2, 3)]

    def test_malformed(self):
        with pytest.raises(DataError, match="malformed edge list"):
            load_edges(FIXTURES / "edges_bad.txt")

    def test_missing(self, tmp_path):
        with pytest.raises(DataError, match="File not found"):
            load_edges(tmp_path / "none.txt")


class TestLoadMarketCaps:
    def test_aligned_to_asset_order(self):
        np.testing.assert_array_equal(load_market_caps(FIXTURES / "marketcap.csv", ["A", "B"]), [100.0, 300.0])

    def test_missing_asset(self):
        with pytest.raises(DataError, match="no market cap for asset 'C'"):
            load_market_caps(FIXTURES / "marketcap.csv", ["A", "B", "C"])


def _config(**data) -> RunConfig:
    return RunConfig.model_validate({"data": data})


class TestBuildDesign:
    """類似度基底の組み立て"""

    def test_term_order_and_names(self):
        config = _config(
            covariates=str(FIXTURES / "covariates.csv"),
            labels=[str(FIXTURES / "labels.csv")],
            edges=[str(FIXTURES / "edges.txt")],
        )
        design = build_design(config, 4, NAMES)

        assert design.terms == ["identity", "kernel:size", "kernel:bm", "label:labels", "edge:edges"]
        assert design.basis.n_terms == 5
        assert design.basis[0].kind is MatrixKind.IDENTITY
        for w in design.basis.matrices[1:]:
            assert np.max(w.column_abs_sums()) == pytest.approx(1.0)

    def test_kernel_and_outer_per_covariate_plus_edge_files(self, tmp_path):
        """11 共変量 × (カーネル + 外積) + 辺ファイル 2 個 → K = 24"""
        p = 6
        rng = np.random.default_rng(0)
        columns = [f"c{j}" for j in range(11)]
        rows = [",".join(columns)] + [",".join(f"{v:.6f}" for v in row) for row in rng.standard_normal((p, 11))]
        (tmp_path / "cov.csv").write_text("\n".join(rows) + "\n")
        (tmp_path / "supply.txt").write_text("0 1\n2 3\n")
        (tmp_path / "owner.txt").write_text("4 5\n0 5\n")
        config = RunConfig.model_validate(
            {
                "data": {
                    "covariates": str(tmp_path / "cov.csv"),
                    "edges": [str(tmp_path / "supply.txt"), str(tmp_path / "owner.txt")],
                },
                "basis": {"kernel": True, "outerproduct": True},
            }
        )
        design = build_design(config, p)

        assert design.basis.n_terms == 25
        assert design.terms[1:3] == ["kernel:c0", "outer:c0"]
        assert design.terms[-2:] == ["edge:supply", "edge:owner"]

    def test_zero_matrix_dropped_with_warning(self, tmp_path, caplog):
        path = tmp_path / "distinct.csv"
        path.write_text("subject,label\nA,a\nB,b\nC,c\nD,d\n")
        with caplog.at_level(logging.WARNING):
            design = build_design(_config(labels=[str(path)]), 4, NAMES)
        assert design.terms == ["identity"]
        assert "is zero" in caplog.text

    def test_unscaled_basis_keeps_values(self):
        config = RunConfig.model_validate(
            {"data": {"edges": [str(FIXTURES / "edges.txt")]}, "basis": {"rescale": False}}
        )
        basis = build_basis(config, 4)
        assert basis[1].to_dense()[0, 1] == 1.0

    def test_triplet_files(self):
        basis = build_basis(_config(triplets=[str(FIXTURES / "triplets.txt")]), 4)
        assert basis.n_terms == 2

    def test_covariate_count_must_match_panel(self):
        with pytest.raises(DataError, match="covariates have 4 subjects"):
            build_design(_config(covariates=str(FIXTURES / "covariates.csv")), 5)
