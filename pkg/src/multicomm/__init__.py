"""Numerical laboratory for multi-parameter commutators on the discrete torus."""

__version__ = "0.1.0"
