"""Exact truncated two-variable series, four-point expansion calculus and
lattice full vertex algebras."""

__version__ = "0.1.0"
