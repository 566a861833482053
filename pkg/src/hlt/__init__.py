"""Hyperspectral likelihood fusion and single-target tracking on synthetic aerial scenes."""

__version__ = "0.1.0"
