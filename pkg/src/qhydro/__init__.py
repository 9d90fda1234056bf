"""Quantum probability fluid laboratory."""
__version__ = "0.1.0"
