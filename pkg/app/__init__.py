"""Numerical toolkit for a point scatterer on 2D and 3D flat tori."""

__version__ = "1.0.0"
