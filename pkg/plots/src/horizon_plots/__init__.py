"""Figure rendering for horizon-lab result logs."""

__version__ = "0.1.0"
