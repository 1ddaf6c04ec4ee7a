"""Physically based defocus synthesis and multi-view depth alignment toolkit."""

__version__ = "0.1.0"
