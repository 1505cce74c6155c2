"""Conditional-risk minimization: theorems, oracles and desk-scale experiments."""

__version__ = "0.1.0"
