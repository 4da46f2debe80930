"""Gaussian-exponential concentration for reversible Markov dynamics."""

__version__ = "0.1.0"
