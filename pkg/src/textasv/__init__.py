"""Text-based speaker verification attack and privacy evaluation toolkit."""

__version__ = "0.1.0"
