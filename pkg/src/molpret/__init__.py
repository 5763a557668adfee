"""Descriptor-pretrained molecular property prediction toolkit."""

__version__ = "0.1.0"
