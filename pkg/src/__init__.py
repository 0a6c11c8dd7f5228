"""DCARP toolkit package."""

from src.helpers import routing_core, scenario

__all__ = ["routing_core", "scenario"]
