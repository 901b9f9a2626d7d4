"""High-dimension expansion of the critical intensity of the random connection model."""

__version__ = "0.1.0"
