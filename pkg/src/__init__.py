"""Masked matrix separation: solvers, recoverability diagnostics and dual certificates."""

__version__ = "0.1.0"
