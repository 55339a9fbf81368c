"""Landau singularities and Gauss-Manin connections of one-loop Feynman integral families."""

__version__ = "0.1.0"
