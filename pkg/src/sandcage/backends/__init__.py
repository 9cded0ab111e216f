"""Isolation backends: ``null`` (none), ``emusfi`` (masked in-process) and ``process``."""

from .base import Backend, SyncMode

__all__ = ["Backend", "SyncMode"]
