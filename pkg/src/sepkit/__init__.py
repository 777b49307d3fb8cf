"""Depth-separation laboratory: radial data, random erf features, witness and GD."""

__version__ = "0.1.0"
