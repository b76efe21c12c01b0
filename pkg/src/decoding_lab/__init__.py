"""Exact decoding experiments over known sequence distributions."""
__version__ = "0.1.0"
