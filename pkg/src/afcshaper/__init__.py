"""Cavity-enhanced atomic frequency comb memory: simulation, pulse shaping and HOM analysis."""

__version__ = "0.1.0"
