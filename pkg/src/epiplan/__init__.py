"""Feedback vaccination and surveillance planning for stochastic epidemics."""

__version__ = "0.1.0"
