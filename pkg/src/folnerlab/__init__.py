"""Følner-sequence toolkit: group models, weights, random coverings and weighted ergodic averages."""

__version__ = "0.1.0"
