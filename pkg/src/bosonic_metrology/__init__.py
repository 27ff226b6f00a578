"""Bosonic-probe quantum metrology toolkit."""

__version__ = "0.1.0"
