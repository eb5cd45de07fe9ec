"""Workspace coverage analysis for on-robot ToF sensor rings."""

__version__ = "0.1.0"
