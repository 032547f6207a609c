"""Hydrogen-like atoms confined to a thin layer."""

__version__ = "0.1.0"
