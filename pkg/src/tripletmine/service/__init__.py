"""HTTP service exposing mining, evaluation and training runs."""

from .app import app, create_app

__all__ = ["app", "create_app"]
