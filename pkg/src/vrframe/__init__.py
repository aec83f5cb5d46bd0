"""Scene-driven simulation of engineering objects."""

__version__ = "0.1.0"
