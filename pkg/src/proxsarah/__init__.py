"""Stochastic proximal SARAH solvers for composite nonconvex optimization."""

__version__ = "0.1.0"
