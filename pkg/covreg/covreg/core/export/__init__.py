"""covreg.core.export: 結果ファイルの書き出し"""

from covreg.covreg.core.export.report_writer import coefficient_frame, config_header, write_csv, write_yaml

__all__ = ["coefficient_frame", "config_header", "write_csv", "write_yaml"]
