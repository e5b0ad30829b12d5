"""Migration life courses of researchers reconstructed from authorship records."""

__version__ = "0.1.0"
