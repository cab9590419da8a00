"""Probabilistically robust learning: risk estimators, closed forms, training and experiments."""

__version__ = "0.1.0"
