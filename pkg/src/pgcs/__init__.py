"""Parameterized geometric constellation shaping through a differentiable blind phase search."""

__version__ = "0.1.0"
