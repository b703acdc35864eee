"""Numerical engine for a genus-one singly periodic helicoid on its elliptic spectral curve."""

__version__ = "0.1.0"
