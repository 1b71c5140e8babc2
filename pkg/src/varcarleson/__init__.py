"""Numerical laboratory for variational Carleson-type operators."""

__version__ = "0.1.0"
