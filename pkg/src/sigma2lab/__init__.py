"""Numerical laboratory for sigma_2 conformal metrics on conic 4-spheres."""

__version__ = "0.1.0"
