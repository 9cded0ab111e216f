"""Ready-made validator closures for ``verify`` and the ``copy_and_verify`` family.

A validator receives the untrusted payload (already copied into host memory)
and returns the trusted result, raising ``ValidationError`` to reject it.
"""

from __future__ import annotations

import logging
import os
from typing import Callable, Container, NoReturn, TypeVar

from .errors import ValidationError

T = TypeVar("T")

log = logging.getLogger("sandcage.validate")

_ABORT_ON_FAILURE = os.environ.get("SANDCAGE_ABORT_ON_VALIDATION") == "1"


def set_abort_on_failure(enabled: bool) -> None:
    """Global policy switch: abort the process instead of raising on rejection."""
    global _ABORT_ON_FAILURE
    _ABORT_ON_FAILURE = enabled


def abort_on_failure() -> bool:
    return _ABORT_ON_FAILURE


def reject(reason: str = "rejected by validator") -> NoReturn:
    raise ValidationError(reason)


def accept_any(value: T) -> T:
    return value


def one_of(allowed: Container[T]) -> Callable[[T], T]:
    def check(value: T) -> T:
        if value not in allowed:
            reject(f"{value!r} is not an allowed value")
        return value

    return check


def in_range(lo: int, hi: int) -> Callable[[int], int]:
    """Inclusive range check."""

    def check(value: int) -> int:
        if not lo <= value <= hi:
            reject(f"{value} outside [{lo}, {hi}]")
        return value

    return check


def predicate(pred: Callable[[T], bool], reason: str = "predicate failed") -> Callable[[T], T]:
    def check(value: T) -> T:
        if not pred(value):
            reject(reason)
        return value

    return check


def run_check(check: Callable[[T], object], value: T) -> object:
    """Apply ``check`` under the global failure policy."""
    try:
        return check(value)
    except ValidationError as exc:
        err = exc
    except Exception as exc:  # a validator crashing is a rejection, not a host fault
        err = ValidationError(f"validator raised {type(exc).__name__}: {exc}")
        err.__cause__ = exc
    if _ABORT_ON_FAILURE:
        log.critical("validation failed, aborting: %s", err)
        os.abort()
    raise err
