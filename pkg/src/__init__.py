"""Dunbar layers - layered ego-network analysis of time-stamped interaction logs."""

__version__ = "1.0.0"
