"""Variational toolkit for the time-periodically forced planar Kepler problem."""

__version__ = "0.1.0"
