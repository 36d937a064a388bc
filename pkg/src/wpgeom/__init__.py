"""Numerical spectral geometry for Kähler-Einstein fibers and Weil-Petersson curvature."""

__version__ = "0.1.0"
