"""Desk-scale laboratory for stability limits of long-horizon execution."""

__version__ = "0.1.0"
