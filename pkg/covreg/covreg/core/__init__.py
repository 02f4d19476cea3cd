"""covreg.core: データ定義と推定エンジン"""
