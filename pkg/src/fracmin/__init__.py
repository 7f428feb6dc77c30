"""Discrete non-local (fractional) perimeter minimizers and their geometric diagnostics."""

__version__ = "0.1.0"
