"""Numerical verification toolkit for boundary-concentrating bubble solutions."""

__version__ = "0.1.0"
