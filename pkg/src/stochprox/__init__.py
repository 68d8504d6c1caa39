"""Gaussian barycentric estimators of proximal points and convex projections."""

__version__ = "0.1.0"
