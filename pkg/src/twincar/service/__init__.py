"""HTTP service wrapping the twin stack; the CLI is a client of this API."""

from .app import create_app

__all__ = ["create_app"]
