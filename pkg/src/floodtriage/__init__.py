"""Evaluation and error-triage toolkit for flood-mapping model outputs."""

__version__ = "0.1.0"
