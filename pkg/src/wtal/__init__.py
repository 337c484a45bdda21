"""Weakly-supervised temporal action localization with two-stream
consensus training on synthetic two-modality data."""

__version__ = "0.1.0"
