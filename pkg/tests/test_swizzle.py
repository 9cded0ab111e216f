from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from sandcage import swizzle
from sandcage.errors import BoundsViolation
from sandcage.machine import U32
from sandcage.taint import TaintedGuestRef

B = 0x0000123400000000


def test_host_to_guest_clears_high_bits() -> None:
    assert swizzle.to_guest(B + 0x20, 1 << 32, B) == 0x20


def test_guest_to_host_uses_example_base() -> None:
    assert swizzle.to_host(0x20, B + 0x10, 1 << 32) == B + 0x20


def test_last_byte_of_small_region() -> None:
    base = 0x7F0004000000
    assert swizzle.to_guest(base + 0x1FFFFFF, 1 << 26, base) == 0x1FFFFFF
    assert swizzle.to_guest(base + 0x3FFFFFF, 1 << 26, base) == 0x3FFFFFF


def test_outside_region_is_rejected() -> None:
    base = 0x7F0004000000
    with pytest.raises(BoundsViolation):
        swizzle.to_guest(base + (1 << 26), 1 << 26, base)
    with pytest.raises(BoundsViolation):
        swizzle.to_guest(base - 1, 1 << 26, base)


def test_guest_high_bits_are_masked() -> None:
    base = 0x7F0004000000
    out = swizzle.to_host(0xFC000010, base + 8, 1 << 26)
    assert out == base + 0x10
    assert base <= out < base + (1 << 26)


def test_null_example_is_refused() -> None:
    with pytest.raises(ValueError):
        swizzle.to_host(0x10, 0, 1 << 20)


def test_region_base() -> None:
    assert swizzle.region_base(B + 0xABCDEF, 1 << 32) == B


@given(
    st.sampled_from([20, 26, 32]),
    st.integers(1, (1 << 47) - 1),
    st.data(),
)
def test_round_trip(log2: int, seed: int, data) -> None:
    size = 1 << log2
    base = (seed << log2) & ((1 << 47) - 1) or size
    x = base + data.draw(st.integers(0, size - 1))
    example = base + data.draw(st.integers(0, size - 1)) or x
    off = swizzle.to_guest(x, size, base)
    assert 0 <= off < size and off <= 0xFFFFFFFF
    assert swizzle.to_host(off, example, size) == x


def test_sandbox_swizzle_methods(any_sb) -> None:
    ref = any_sb.malloc(U32)
    off = any_sb.swizzle_to_guest(ref)
    assert off == ref.guest_offset.unsafe_unverified()
    assert any_sb.swizzle_to_host(off) == ref.host_address()
    assert any_sb.swizzle_to_host(off, any_sb.base + 123) == ref.host_address()
    with pytest.raises(BoundsViolation):
        any_sb.swizzle_to_guest(any_sb.base + any_sb.size)


def test_region_is_size_aligned(any_sb) -> None:
    assert any_sb.base % any_sb.size == 0
    ref = TaintedGuestRef(any_sb, any_sb.size - 4, U32)
    assert swizzle.region_base(ref.host_address(), any_sb.size) == any_sb.base
