"""HTTP service layer wrapping the experiment pipeline."""

from .app import app, create_app

__all__ = ["app", "create_app"]
