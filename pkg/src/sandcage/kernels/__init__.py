"""Hot kernels, compiled when available.

The Cython build (``_native``) is used unless it is missing or
``SANDCAGE_PURE_PYTHON=1`` is set; ``_pure`` has the same API.
"""

from __future__ import annotations

import os
from types import ModuleType

from . import _pure


def _select() -> ModuleType:
    if os.environ.get("SANDCAGE_PURE_PYTHON") == "1":
        return _pure
    try:
        from . import _native  # type: ignore[attr-defined]
    except ImportError:
        return _pure
    return _native  # type: ignore[no-any-return]


impl = _select()
IMPLEMENTATION: str = impl.IMPLEMENTATION

MaskedRegion = impl.MaskedRegion
scan_u64 = impl.scan_u64
load_u32 = impl.load_u32
store_u32 = impl.store_u32
futex_wait = impl.futex_wait
futex_wake = impl.futex_wake
spin_wait = impl.spin_wait

ROW_DONE = _pure.ROW_DONE
ROW_NEED_INPUT = _pure.ROW_NEED_INPUT
ROW_SHORT = _pure.ROW_SHORT
ROW_OVERFLOW = _pure.ROW_OVERFLOW


def native_available() -> bool:
    try:
        from . import _native  # type: ignore[attr-defined]  # noqa: F401
    except ImportError:
        return False
    return True


def implementation(name: str) -> ModuleType:
    """Return a specific kernel module (``"python"`` or ``"cython"``) for comparisons."""
    if name == "python":
        return _pure
    if name == "cython":
        from . import _native  # type: ignore[attr-defined]

        return _native  # type: ignore[no-any-return]
    raise ValueError(f"unknown kernel implementation {name!r}")
