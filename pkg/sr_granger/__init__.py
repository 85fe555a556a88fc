"""Single-regression Granger causality: estimation, null laws and tests."""

__version__ = "0.1.0"
