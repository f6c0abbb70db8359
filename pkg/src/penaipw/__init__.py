"""Doubly robust treatment-effect estimation with penalized nuisance models."""

__version__ = "0.1.0"
