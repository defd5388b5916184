"""Cone-track autonomous racing stack."""

__version__ = "0.1.0"
