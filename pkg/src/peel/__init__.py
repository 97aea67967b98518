"""Premise extraction and root-divergence analysis for conversation transcripts."""

__version__ = "0.1.0"
