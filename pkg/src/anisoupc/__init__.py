"""Uniform polyconvexity and ellipticity checks for anisotropic integrands."""

__version__ = "0.1.0"
