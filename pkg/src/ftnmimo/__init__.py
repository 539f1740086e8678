"""MIMO faster-than-Nyquist capacity and IAPR analysis."""

__version__ = "0.1.0"
