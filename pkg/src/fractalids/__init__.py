"""Numerical laboratory for random Schroedinger operators on nested fractals."""

__version__ = "0.1.0"
