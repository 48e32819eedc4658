"""Robust mu-synthesis toolkit for serial robots modeled as polytopic inclusions."""

__version__ = "0.1.0"
