"""ECG rhythm annotation toolkit."""

__version__ = "0.1.0"
