"""Topo-semantic navigation graphs and sign-cue Monte Carlo localization."""

__version__ = "0.1.0"
