"""Pure-Python kernels; same API as the compiled ``_native`` module."""

from __future__ import annotations

import ctypes
import os
import struct
import time

IMPLEMENTATION = "python"

ROW_DONE = 0
ROW_NEED_INPUT = 1
ROW_SHORT = 2
ROW_OVERFLOW = 3

_FMT = {1: "<B", 2: "<H", 4: "<I", 8: "<Q"}


class MaskedRegion:
    """Guest-side accessors: every effective address is ``(offset + i) & mask``."""

    def __init__(self, base: int, size: int, view: memoryview) -> None:
        if size & (size - 1) or len(view) != size:
            raise ValueError("region size must be a power of two matching the view")
        self.base = base
        self.size = size
        self.mask = size - 1
        self._view = view

    def load(self, off: int, width: int) -> int:
        start = off & self.mask
        if start + width <= self.size:
            return struct.unpack_from(_FMT[width], self._view, start)[0]  # type: ignore[no-any-return]
        return int.from_bytes(self.read(off, width), "little")

    def store(self, off: int, width: int, value: int) -> None:
        start = off & self.mask
        value &= (1 << (8 * width)) - 1
        if start + width <= self.size:
            struct.pack_into(_FMT[width], self._view, start, value)
        else:
            self.write(off, value.to_bytes(width, "little"))

    def read(self, off: int, n: int) -> bytes:
        if n < 0 or n > self.size:
            raise ValueError("length out of range")
        start = off & self.mask
        end = start + n
        if end <= self.size:
            return bytes(self._view[start:end])
        return bytes(self._view[start:]) + bytes(self._view[: end - self.size])

    def write(self, off: int, data: bytes) -> None:
        n = len(data)
        if n > self.size:
            raise ValueError("length out of range")
        start = off & self.mask
        end = start + n
        if end <= self.size:
            self._view[start:end] = data
        else:
            split = self.size - start
            self._view[start:] = data[:split]
            self._view[: end - self.size] = data[split:]

    def fill(self, off: int, n: int, byte: int) -> None:
        self.write(off, bytes([byte & 0xFF]) * n)

    def decode_row(self, src: int, avail: int, dst: int, x: int, width: int) -> tuple[int, int, int, int]:
        """Decode RLE pairs from ``src`` into the row at ``dst`` until the row terminator.

        Returns ``(src, avail, x, state)``; a pair split across the end of the
        available input is left unconsumed.
        """
        if avail <= 0:
            return src, avail, x, ROW_NEED_INPUT
        data = self.read(src, min(avail, self.size))
        i = 0
        out = bytearray()
        state = ROW_NEED_INPUT
        while i < len(data):
            count = data[i]
            if count == 0:
                if x + len(out) != width:
                    state = ROW_SHORT
                    break
                i += 1
                state = ROW_DONE
                break
            if i + 1 >= len(data):
                break
            if x + len(out) + count > width:
                state = ROW_OVERFLOW
                break
            out += bytes((data[i + 1],)) * count
            i += 2
        if out:
            self.write(dst + x, bytes(out))
        return src + i, avail - i, x + len(out), state


def scan_u64(view: memoryview, targets: "set[int] | frozenset[int]") -> list[int]:
    """Byte offsets of every 8-byte little-endian window equal to one of ``targets``."""
    if not targets:
        return []
    data = bytes(view)
    hits: list[int] = []
    for t in targets:
        pat = (t & 0xFFFFFFFFFFFFFFFF).to_bytes(8, "little")
        pos = data.find(pat)
        while pos != -1:
            hits.append(pos)
            pos = data.find(pat, pos + 1)
    return sorted(hits)


# --- channel synchronization -------------------------------------------------

_SYS_FUTEX = 202  # x86_64
_FUTEX_WAIT = 0
_FUTEX_WAKE = 1

_libc = ctypes.CDLL(None, use_errno=True)
_libc.syscall.restype = ctypes.c_long


class _Timespec(ctypes.Structure):
    _fields_ = [("tv_sec", ctypes.c_long), ("tv_nsec", ctypes.c_long)]


def load_u32(addr: int) -> int:
    return ctypes.c_uint32.from_address(addr).value


def store_u32(addr: int, value: int) -> None:
    ctypes.c_uint32.from_address(addr).value = value


def futex_wait(addr: int, expected: int, timeout_ns: int) -> int:
    """Sleep while the u32 at ``addr`` equals ``expected`` (or until timeout)."""
    ts = _Timespec(timeout_ns // 1_000_000_000, timeout_ns % 1_000_000_000)
    return int(
        _libc.syscall(
            ctypes.c_long(_SYS_FUTEX),
            ctypes.c_void_p(addr),
            ctypes.c_int(_FUTEX_WAIT),
            ctypes.c_uint32(expected),
            ctypes.byref(ts),
            None,
            ctypes.c_int(0),
        )
    )


def futex_wake(addr: int, n: int = 1) -> int:
    return int(
        _libc.syscall(
            ctypes.c_long(_SYS_FUTEX),
            ctypes.c_void_p(addr),
            ctypes.c_int(_FUTEX_WAKE),
            ctypes.c_int(n),
            None,
            None,
            ctypes.c_int(0),
        )
    )


def spin_wait(addr: int, want: int, limit: int, yield_every: int) -> bool:
    """Busy-wait until the u32 at ``addr`` equals ``want``; False after ``limit`` iterations."""
    cell = ctypes.c_uint32.from_address(addr)
    sched_yield = os.sched_yield
    i = 0
    while i < limit:
        if cell.value == want:
            return True
        i += 1
        if yield_every and i % yield_every == 0:
            sched_yield()
    return cell.value == want


def monotonic_ns() -> int:
    return time.monotonic_ns()
