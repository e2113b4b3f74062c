"""Simulation and verification of OAM qudit gates built from linear optics."""

__version__ = "0.1.0"
