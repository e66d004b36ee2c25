"""Numerical checks for fractional Korn-type inequalities and nonlocal p-Laplace systems."""

__version__ = "0.1.0"
