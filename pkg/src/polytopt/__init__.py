"""Polyhedral topology optimization with the virtual element method."""
__version__ = "0.1.0"
