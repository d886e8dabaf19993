"""Spectral hole burning and accumulated-echo simulation for Er3+:CaWO4 with a 183W bath."""

__version__ = "0.1.0"
