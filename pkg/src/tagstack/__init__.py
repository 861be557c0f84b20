"""Deterministic memory tagging for stack allocations of a small SSA IR."""

__version__ = "0.1.0"
