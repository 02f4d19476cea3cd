"""covreg.tests: テストスイート"""
