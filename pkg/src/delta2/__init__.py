"""Ershov-hierarchy witnesses for provably Delta^0_2 sets, at desk scale."""

__version__ = "0.1.0"
