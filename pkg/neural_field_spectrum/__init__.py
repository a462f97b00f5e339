"""Spectrum, Hopf bifurcation and simulation of a delayed neural field on a rectangle."""

__version__ = "0.1.0"
