"""Decentralized stochastic optimization with gradient tracking and variance reduction."""

__version__ = "0.1.0"
