"""Selective state attention laboratory: symbolic search, trace codec, tiny
transformers with structured attention masks, and verification diagnostics."""

__version__ = "0.1.0"
