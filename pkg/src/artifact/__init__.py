"""Distributionally preference-robust optimisation with piecewise-linear utilities."""

__version__ = "0.1.0"
