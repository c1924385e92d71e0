"""Floating-label information-flow monitors with flow-insensitive and flow-sensitive references."""

__version__ = "0.1.0"
