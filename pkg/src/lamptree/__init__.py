"""Numerical laboratory for the switch-walk-switch lamplighter walk on regular trees."""

__version__ = "0.1.0"
