"""Migration backends with no isolation.

``DIRECT`` calls straight into the library and can reach any of its symbols,
exported or not.  ``INDIRECT`` routes every call through the export table, so
anything not exported fails to resolve; it is the last step before switching
to a real isolating backend.  Both still use a size-aligned region so that
swizzling and every taint rule behave exactly as they do under isolation.
"""

from __future__ import annotations

import enum
from typing import Sequence

from ..guest import GuestLibrary, Memory, Signature
from ..kernels import MaskedRegion
from ..region import AlignedMapping
from .base import InProcessBackend


class NullVariant(enum.Enum):
    DIRECT = "direct"
    INDIRECT = "indirect"


class DirectMemory:
    """Unmasked accessors: an out-of-range guest access faults instead of wrapping."""

    def __init__(self, mapping: AlignedMapping) -> None:
        self.size = mapping.size
        self._k = MaskedRegion(mapping.base, mapping.size, mapping.view)

    def _span(self, off: int, n: int) -> None:
        if off < 0 or n < 0 or off + n > self.size:
            raise IndexError(f"guest access {off:#x}+{n} outside region")

    def load(self, off: int, width: int) -> int:
        self._span(off, width)
        return int(self._k.load(off, width))

    def store(self, off: int, width: int, value: int) -> None:
        self._span(off, width)
        self._k.store(off, width, value)

    def read(self, off: int, n: int) -> bytes:
        self._span(off, n)
        return bytes(self._k.read(off, n))

    def write(self, off: int, data: bytes) -> None:
        self._span(off, len(data))
        self._k.write(off, data)

    def fill(self, off: int, n: int, byte: int) -> None:
        self._span(off, n)
        self._k.fill(off, n, byte)

    def decode_row(self, src: int, avail: int, dst: int, x: int, width: int) -> tuple[int, int, int, int]:
        self._span(src, max(avail, 0))
        self._span(dst, width)
        return tuple(self._k.decode_row(src, avail, dst, x, width))


class NullBackend(InProcessBackend):
    name = "null"
    isolating = False

    def __init__(self, library: GuestLibrary, variant: str = "clean", mode: NullVariant | str = NullVariant.DIRECT) -> None:
        super().__init__(library, variant)
        self.mode = NullVariant(mode)

    def make_memory(self, mapping: AlignedMapping) -> Memory:
        return DirectMemory(mapping)

    def resolve(self, name: str) -> tuple[int, Signature]:
        idx = self.library.resolve(name, exported_only=self.mode is NullVariant.INDIRECT)
        return idx, self.library.function(idx).signature

    def call(self, index: int, args: Sequence[tuple[int, int]]) -> int:
        if self.mode is NullVariant.INDIRECT:
            # the indirect variant has no entry points outside the table
            fn = self.library.function(index)
            if not fn.exported:
                from ..errors import ResolutionError

                raise ResolutionError(f"{fn.name} is not reachable through the export table")
        return super().call(index, args)
