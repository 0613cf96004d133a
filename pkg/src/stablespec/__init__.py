"""Stable prediction under mechanism shift with partial ancestral graphs."""

__version__ = "0.1.0"
