"""Harmonic invariant 3-forms on compact homogeneous spaces."""

__version__ = "0.1.0"
