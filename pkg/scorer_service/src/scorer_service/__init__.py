"""Scoring microservice for candidate/reference sentence pairs."""

__version__ = "0.1.0"
