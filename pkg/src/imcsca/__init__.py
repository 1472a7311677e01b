"""Side-channel structure recovery for in-memory computing logic."""

__version__ = "0.1.0"
