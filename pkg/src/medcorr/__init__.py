"""Retrieval-augmented LLM pipelines for medical-error detection and
correction in clinical notes."""

__version__ = "0.1.0"
