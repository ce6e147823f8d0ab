"""Learned Bregman divergences with input-convex generators."""

__version__ = "0.1.0"
