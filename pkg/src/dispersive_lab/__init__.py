"""Simulation lab for 1-D cubic dispersive equations with convex dispersion."""

__version__ = "0.1.0"
