"""Numerical experiments on comparison geometry under an angle-comparison curvature hypothesis."""

__version__ = "0.1.0"
