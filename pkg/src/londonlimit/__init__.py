"""Boundary-integral computations for the London limit of superconducting bodies."""

__version__ = "0.1.0"
