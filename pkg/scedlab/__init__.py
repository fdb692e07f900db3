"""Subcode ensemble decoding of LDPC codes."""

__version__ = "1.0.0"
