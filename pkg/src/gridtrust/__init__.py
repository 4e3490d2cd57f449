"""Randomly placed control-center function secured by attestation and trust."""

__version__ = "0.1.0"
