"""Typed method-evolution graphs: lineage search, idea evaluation and generation."""

__version__ = "0.1.0"
