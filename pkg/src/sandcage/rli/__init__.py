"""RLI: the demo image format, its sandboxed decoder and the host port."""

from __future__ import annotations

import importlib
from typing import TYPE_CHECKING, Any

if TYPE_CHECKING:
    from .format import FormatError, encode, oracle_decode, random_image
    from .info import RliInfo

_LAZY = {
    "FormatError": ".format",
    "encode": ".format",
    "oracle_decode": ".format",
    "random_image": ".format",
    "RliInfo": ".info",
}

__all__ = ["FormatError", "RliInfo", "encode", "oracle_decode", "random_image"]


def __getattr__(name: str) -> Any:
    # lazy so that a worker importing only the guest side stays light
    mod = _LAZY.get(name)
    if mod is None:
        raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
    return getattr(importlib.import_module(mod, __name__), name)
