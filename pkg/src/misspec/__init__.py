"""Misspecified small-noise estimation: signals, estimators, limit laws and Monte Carlo checks."""

__version__ = "0.1.0"
