"""Bayesian latent-normal inference for rank-based tests."""

__version__ = "0.1.0"
