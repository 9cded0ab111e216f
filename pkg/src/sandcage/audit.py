"""Audit trail for ``unsafe_unverified`` escapes.

Off by default; ``SANDCAGE_AUDIT=1`` turns it on at import.  Each escape emits
one line ``UNSAFE <sandbox-id> <call-site-label>`` to the configured sink.
"""

from __future__ import annotations

import os
import sys
import threading
from typing import Callable, TextIO, Union

Sink = Union[Callable[[str], None], TextIO]

_lock = threading.Lock()
_enabled = os.environ.get("SANDCAGE_AUDIT") == "1"
_sink: Sink | None = None
count = 0


def enable(sink: Sink | None = None) -> None:
    global _enabled, _sink
    with _lock:
        _enabled = True
        _sink = sink


def disable() -> None:
    global _enabled
    with _lock:
        _enabled = False


def enabled() -> bool:
    return _enabled


def reset() -> None:
    global count
    with _lock:
        count = 0


def call_site(depth: int = 2) -> str:
    frame = sys._getframe(depth)
    return f"{os.path.basename(frame.f_code.co_filename)}:{frame.f_lineno}"


def record(origin: str, label: str) -> None:
    global count
    if not _enabled:
        return
    line = f"UNSAFE {origin} {label}"
    with _lock:
        count += 1
        sink = _sink
    if sink is None:
        sys.stderr.write(line + "\n")
    elif callable(sink):
        sink(line)
    else:
        sink.write(line + "\n")
