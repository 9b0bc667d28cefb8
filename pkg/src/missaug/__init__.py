"""Missingness-augmentation training for deep generative imputers."""

__version__ = "0.1.0"
