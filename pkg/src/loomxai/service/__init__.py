"""Standalone host: FastAPI service bridging wire-format messages to views."""

from .app import SessionManager, create_app

__all__ = ["SessionManager", "create_app"]
