"""Orbital magnetism of confined electrons: exact spectra versus semiclassics."""

__version__ = "0.1.0"
