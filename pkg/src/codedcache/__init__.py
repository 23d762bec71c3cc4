"""Coded cache placement for SIC receivers in small-cell networks."""

__version__ = "0.1.0"
