"""Region merging segmentation driven by a sequential consistency test."""

__version__ = "0.1.0"
