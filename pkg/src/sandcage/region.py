"""Size-aligned memory regions backed by raw mmap.

A sandbox region of ``size`` bytes (a power of two) is placed at a host
address that is a multiple of ``size``, with an inaccessible guard page on
each side.  Alignment is what makes context-free swizzling possible.
"""

from __future__ import annotations

import ctypes
import mmap
import os
import weakref

PAGE = mmap.PAGESIZE
MIN_REGION = 1 << 20

_PROT_NONE = 0
_PROT_RW = mmap.PROT_READ | mmap.PROT_WRITE
_MAP_SHARED = 0x01
_MAP_PRIVATE = 0x02
_MAP_FIXED = 0x10
_MAP_ANONYMOUS = 0x20
_MAP_NORESERVE = 0x4000
_MADV_DONTNEED = 4
_MAP_FAILED = ctypes.c_void_p(-1).value

_libc = ctypes.CDLL(None, use_errno=True)
_libc.mmap.restype = ctypes.c_void_p
_libc.mmap.argtypes = [ctypes.c_void_p, ctypes.c_size_t, ctypes.c_int, ctypes.c_int, ctypes.c_int, ctypes.c_long]
_libc.munmap.restype = ctypes.c_int
_libc.munmap.argtypes = [ctypes.c_void_p, ctypes.c_size_t]
_libc.madvise.restype = ctypes.c_int
_libc.madvise.argtypes = [ctypes.c_void_p, ctypes.c_size_t, ctypes.c_int]
_libc.mincore.restype = ctypes.c_int
_libc.mincore.argtypes = [ctypes.c_void_p, ctypes.c_size_t, ctypes.c_char_p]


def is_power_of_two(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


def _mmap(addr: int | None, length: int, prot: int, flags: int, fd: int = -1, offset: int = 0) -> int:
    res = _libc.mmap(addr, length, prot, flags, fd, offset)
    if res is None or res == _MAP_FAILED:
        err = ctypes.get_errno()
        raise OSError(err, f"mmap failed: {os.strerror(err)}")
    return int(res)


def _munmap(addr: int, length: int) -> None:
    if length > 0:
        _libc.munmap(addr, length)


def _view(addr: int, length: int, owner: object) -> memoryview:
    arr = (ctypes.c_ubyte * length).from_address(addr)
    arr._owner = owner  # type: ignore[attr-defined]  # views keep the mapping alive
    return memoryview(arr).cast("B")


class AlignedMapping:
    """``size`` bytes at a ``size``-aligned host address, optionally file-backed.

    ``close()`` replaces the pages with a fresh zero mapping so memory is
    returned immediately; the address range itself is unmapped once no view
    into it remains.
    """

    def __init__(self, size: int, fd: int | None = None, offset: int = 0, *, guard: bool = True) -> None:
        if not is_power_of_two(size) or size < PAGE:
            raise ValueError(f"region size {size} must be a power of two >= {PAGE}")
        gap = PAGE if guard else 0
        span = 2 * size + 2 * gap
        reserve = _mmap(None, span, _PROT_NONE, _MAP_PRIVATE | _MAP_ANONYMOUS | _MAP_NORESERVE)
        base = (reserve + gap + size - 1) & ~(size - 1)
        try:
            if fd is None:
                flags = _MAP_FIXED | _MAP_PRIVATE | _MAP_ANONYMOUS | _MAP_NORESERVE
                _mmap(base, size, _PROT_RW, flags)
            else:
                _mmap(base, size, _PROT_RW, _MAP_FIXED | _MAP_SHARED, fd, offset)
        except OSError:
            _munmap(reserve, span)
            raise
        # keep one PROT_NONE guard page on each side, give the rest back
        lo, hi = base - gap, base + size + gap
        _munmap(reserve, lo - reserve)
        _munmap(hi, reserve + span - hi)
        self.base = base
        self.size = size
        self.guard = gap
        self.shared = fd is not None
        self.closed = False
        self.view: memoryview = _view(base, size, self)
        self._finalizer = weakref.finalize(self, _munmap, lo, hi - lo)

    @property
    def mask(self) -> int:
        return self.size - 1

    def close(self) -> None:
        if self.closed:
            return
        self.closed = True
        flags = _MAP_FIXED | _MAP_PRIVATE | _MAP_ANONYMOUS | _MAP_NORESERVE
        _mmap(self.base, self.size, _PROT_RW, flags)
        self.view = memoryview(b"")

    def resident_bytes(self) -> int:
        """Bytes of the region currently backed by physical pages (``mincore``)."""
        if self.closed:
            return 0
        npages = self.size // PAGE
        vec = ctypes.create_string_buffer(npages)
        if _libc.mincore(self.base, self.size, vec) != 0:
            err = ctypes.get_errno()
            raise OSError(err, os.strerror(err))
        return sum(b & 1 for b in vec.raw) * PAGE

    def __repr__(self) -> str:
        return f"AlignedMapping(base={self.base:#x}, size={self.size:#x})"


class RawMapping:
    """A plain shared mapping at whatever address the kernel picks."""

    def __init__(self, fd: int, length: int, offset: int = 0) -> None:
        self.base = _mmap(None, length, _PROT_RW, _MAP_SHARED, fd, offset)
        self.size = length
        self.view: memoryview = _view(self.base, length, self)
        self._finalizer = weakref.finalize(self, _munmap, self.base, length)
