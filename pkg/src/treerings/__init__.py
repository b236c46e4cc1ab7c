"""Tree-ring delineation on full wood cross-section images."""

__version__ = "0.1.0"
