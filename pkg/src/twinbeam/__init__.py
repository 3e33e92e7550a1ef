"""Stochastic simulation of spatial twin-beam correlations in high-gain parametric down-conversion."""

__version__ = "0.1.0"
