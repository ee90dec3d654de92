"""Symbolic and numerical checks for Carleman estimates of KdV-type operators."""

__version__ = "0.1.0"
