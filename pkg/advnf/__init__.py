"""Adversarially trained conditional normalizing flows for multi-modal sampling."""

__version__ = "0.3.0"
