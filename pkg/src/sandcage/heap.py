"""Guest heap allocator.

Allocator metadata lives in host memory, never inside the region, so the
guest can neither read nor corrupt it.  Blocks are 16-byte granular, which
covers every guest alignment.  The first page is reserved so that offset 0
stays a recognisable null.
"""

from __future__ import annotations

import bisect
import threading

from .errors import AllocError, InvalidFree

GRANULE = 16
RESERVED = 4096


def _round(n: int, to: int) -> int:
    return -(-n // to) * to


class GuestHeap:
    """First-fit free list with coalescing over ``[reserved, size)``."""

    def __init__(self, size: int, reserved: int = RESERVED) -> None:
        if reserved >= size:
            raise ValueError("heap has no room after the reserved prefix")
        self.size = size
        self.reserved = reserved
        self._starts: list[int] = [reserved]  # free block starts, sorted
        self._lens: dict[int, int] = {reserved: size - reserved}
        self._live: dict[int, int] = {}
        self._lock = threading.Lock()

    @property
    def allocated(self) -> int:
        return sum(self._live.values())

    @property
    def free_bytes(self) -> int:
        return sum(self._lens.values())

    def live_blocks(self) -> dict[int, int]:
        return dict(self._live)

    def malloc(self, nbytes: int, align: int = GRANULE) -> int:
        if nbytes < 0:
            raise AllocError(f"negative allocation size {nbytes}")
        if align <= 0 or align & (align - 1):
            raise ValueError(f"alignment {align} is not a power of two")
        need = _round(max(nbytes, 1), GRANULE)
        align = max(align, GRANULE)
        with self._lock:
            for start in self._starts:
                length = self._lens[start]
                off = _round(start, align)
                pad = off - start
                if pad + need > length:
                    continue
                self._take(start, length, off, need)
                self._live[off] = need
                return off
        raise AllocError(f"guest heap exhausted allocating {nbytes} bytes")

    def _take(self, start: int, length: int, off: int, need: int) -> None:
        i = bisect.bisect_left(self._starts, start)
        del self._starts[i]
        del self._lens[start]
        if off > start:
            self._insert(start, off - start)
        tail = start + length - (off + need)
        if tail:
            self._insert(off + need, tail)

    def _insert(self, start: int, length: int) -> None:
        bisect.insort(self._starts, start)
        self._lens[start] = length

    def free(self, off: int) -> None:
        with self._lock:
            length = self._live.pop(off, None)
            if length is None:
                raise InvalidFree(f"offset {off:#x} is not a live allocation")
            i = bisect.bisect_left(self._starts, off)
            # merge with the following free block
            if i < len(self._starts) and self._starts[i] == off + length:
                nxt = self._starts.pop(i)
                length += self._lens.pop(nxt)
            # and with the preceding one
            if i > 0:
                prev = self._starts[i - 1]
                if prev + self._lens[prev] == off:
                    self._lens[prev] += length
                    return
            self._starts.insert(i, off)
            self._lens[off] = length

    def block_size(self, off: int) -> int | None:
        return self._live.get(off)
