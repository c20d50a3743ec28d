"""Generalized Radon transforms of symmetric tensor fields and their inversion."""

__version__ = "0.1.0"
