"""Numerical laboratory for parabolic obstacle problems on homogeneous Carnot groups."""

__version__ = "0.1.0"
