"""In-process SFI emulation.

The guest's view of memory is a ``MaskedRegion``: every effective address is
``base | (offset & (size - 1))``, so out-of-range guest arithmetic wraps
harmlessly inside the region instead of reaching host memory.  The region is
bracketed by inaccessible guard pages.
"""

from __future__ import annotations

from ..guest import Memory
from ..kernels import MaskedRegion
from ..region import AlignedMapping
from .base import InProcessBackend


class EmuSfiBackend(InProcessBackend):
    name = "emusfi"
    isolating = True

    def make_memory(self, mapping: AlignedMapping) -> Memory:
        return MaskedRegion(mapping.base, mapping.size, mapping.view)  # type: ignore[no-any-return]


def masked_load(region: MaskedRegion, offset: int, width: int) -> bytes:
    return bytes(region.read(offset, width))


def masked_store(region: MaskedRegion, offset: int, data: bytes) -> None:
    region.write(offset, data)
