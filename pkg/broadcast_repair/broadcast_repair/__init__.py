"""Capacity analysis and repair simulation for storage systems with broadcast repair."""

__version__ = "0.1.0"
TOOL_NAME = "broadcast-repair"
