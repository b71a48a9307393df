"""Fairness auditing and DP-constrained training for binary classification."""

__version__ = "0.1.0"
