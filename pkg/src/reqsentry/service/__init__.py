"""Operational shell: the scoring pipeline, the HTTP API, and the CLI."""

from .pipeline import LocalScorer, Pipeline, RemoteScorer, ScoringError
from .api import create_app

__all__ = ["LocalScorer", "Pipeline", "RemoteScorer", "ScoringError", "create_app"]
