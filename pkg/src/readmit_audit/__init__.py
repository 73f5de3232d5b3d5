"""Readmission-model training and group-fairness auditing."""

__version__ = "0.1.0"
