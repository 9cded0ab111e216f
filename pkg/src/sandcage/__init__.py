"""Library sandboxing with tainted data flow and pluggable isolation backends."""

from __future__ import annotations

import importlib
from typing import TYPE_CHECKING, Any

if TYPE_CHECKING:
    from .errors import (
        BoundsViolation,
        CallbackViolation,
        CreationError,
        DecodeError,
        GuestAbort,
        ProtocolViolation,
        SandboxDead,
        SandboxError,
        TaintError,
        TamperViolation,
        ValidationError,
        Violation,
    )
    from .records import CallbackField, Field, FreezableField, GuestRecord, RefField
    from .runtime import CallbackRegistration, FunctionRef, Sandbox, create_sandbox, destroy_sandbox
    from .taint import (
        FreezableCell,
        Frozen,
        Tainted,
        TaintedGuestRef,
        TaintedVolatile,
        tainted,
        tainted_arith,
        tainted_compare,
        unsafe_unverified,
        verify,
    )

__version__ = "0.1.0"

_LAZY = {
    "BoundsViolation": ".errors",
    "CallbackViolation": ".errors",
    "CreationError": ".errors",
    "DecodeError": ".errors",
    "GuestAbort": ".errors",
    "ProtocolViolation": ".errors",
    "SandboxDead": ".errors",
    "SandboxError": ".errors",
    "TaintError": ".errors",
    "TamperViolation": ".errors",
    "ValidationError": ".errors",
    "Violation": ".errors",
    "CallbackField": ".records",
    "Field": ".records",
    "FreezableField": ".records",
    "GuestRecord": ".records",
    "RefField": ".records",
    "CallbackRegistration": ".runtime",
    "FunctionRef": ".runtime",
    "Sandbox": ".runtime",
    "create_sandbox": ".runtime",
    "destroy_sandbox": ".runtime",
    "FreezableCell": ".taint",
    "Frozen": ".taint",
    "Tainted": ".taint",
    "TaintedGuestRef": ".taint",
    "TaintedVolatile": ".taint",
    "tainted": ".taint",
    "tainted_arith": ".taint",
    "tainted_compare": ".taint",
    "unsafe_unverified": ".taint",
    "verify": ".taint",
}

__all__ = [
    "BoundsViolation",
    "CallbackField",
    "CallbackRegistration",
    "CallbackViolation",
    "CreationError",
    "DecodeError",
    "Field",
    "FreezableCell",
    "FreezableField",
    "Frozen",
    "FunctionRef",
    "GuestAbort",
    "GuestRecord",
    "ProtocolViolation",
    "RefField",
    "Sandbox",
    "SandboxDead",
    "SandboxError",
    "TaintError",
    "Tainted",
    "TaintedGuestRef",
    "TaintedVolatile",
    "TamperViolation",
    "ValidationError",
    "Violation",
    "create_sandbox",
    "destroy_sandbox",
    "tainted",
    "tainted_arith",
    "tainted_compare",
    "unsafe_unverified",
    "verify",
]


def __getattr__(name: str) -> Any:
    # submodules load on first use; the worker process never needs the host API
    mod = _LAZY.get(name)
    if mod is None:
        raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
    value = getattr(importlib.import_module(mod, __name__), name)
    globals()[name] = value
    return value
