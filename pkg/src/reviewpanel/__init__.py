"""Firm-week review sentiment features, firm characteristics and panel estimators."""

__version__ = "0.1.0"
