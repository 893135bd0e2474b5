"""Desk-scale physics-informed energy-based model for earthquake catalogs."""

__version__ = "0.1.0"
