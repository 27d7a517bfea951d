"""Selective sign-determining confidence intervals."""

__version__ = "0.1.0"
