"""covreg.covreg: 推定エンジン本体"""
