"""Generalized multiscale finite elements for high-contrast elliptic problems."""

__version__ = "0.1.0"
