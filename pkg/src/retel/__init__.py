"""Exponentially tilted empirical likelihoods, regularized and otherwise."""

__version__ = "0.1.0"
