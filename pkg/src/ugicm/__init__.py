"""ugicm: unified conditional image codec with CLIP-style semantic supervision."""

__version__ = "0.1.0"
