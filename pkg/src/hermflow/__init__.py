"""Hermitian geometry toolkit and Type IIB flow laboratory."""

__version__ = "0.1.0"
