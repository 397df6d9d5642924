"""Evaluation, sampling and aggregation elimination for many-valued probability logic."""

__version__ = "0.1.0"
