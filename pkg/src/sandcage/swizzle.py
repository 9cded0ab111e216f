"""Context-free pointer swizzling over size-aligned regions.

Because a region of ``size`` bytes starts at a multiple of ``size``, a guest
offset is just the low bits of a host address, and the region base can be
recovered from any in-region host address by clearing those low bits.
"""

from __future__ import annotations

from .errors import BoundsViolation

GUEST_ADDRESS_MASK = 0xFFFFFFFF


def to_guest(host_addr: int, size: int, base: int | None = None) -> int:
    """Host address -> 32-bit guest offset.

    With ``base`` given, addresses outside ``[base, base + size)`` are rejected;
    without it the conversion is the pure mask.
    """
    if base is not None and not base <= host_addr < base + size:
        raise BoundsViolation(f"host address {host_addr:#x} is outside region {base:#x}+{size:#x}")
    return host_addr & (size - 1) & GUEST_ADDRESS_MASK


def to_host(guest_off: int, example_host_addr: int, size: int) -> int:
    """32-bit guest offset -> host address, using any in-region host address as the example."""
    if not example_host_addr:
        raise ValueError("example pointer must be non-null")
    base = example_host_addr & ~(size - 1)
    return base | (guest_off & (size - 1))


def region_base(example_host_addr: int, size: int) -> int:
    return example_host_addr & ~(size - 1)
