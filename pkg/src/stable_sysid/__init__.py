"""Identification of incrementally stable implicit polynomial state-space models."""

__version__ = "0.1.0"
