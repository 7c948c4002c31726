"""Transmitter localization with a simulated quantum sensor network."""
__version__ = "0.1.0"
