"""Numerical convex-integration engine for the stochastically forced
Boussinesq system on the periodic torus."""

__version__ = "0.1.0"
