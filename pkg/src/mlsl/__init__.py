"""Reduced Maxwell-Lorentz system with a spinning extended charge."""

__version__ = "0.1.0"
