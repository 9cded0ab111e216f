"""The compiled kernels against the pure-Python fallback."""

from __future__ import annotations

import ctypes
import os
import subprocess
import sys
import threading
import time

import pytest
from hypothesis import given
from hypothesis import strategies as st

from sandcage import kernels
from sandcage.region import AlignedMapping

SIZE = 1 << 14

pytestmark = pytest.mark.skipif(not kernels.native_available(), reason="compiled kernels not built")

pure = kernels.implementation("python")


@pytest.fixture(scope="module")
def pair():
    native = kernels.implementation("cython")
    a, b = AlignedMapping(SIZE), AlignedMapping(SIZE)
    yield pure.MaskedRegion(a.base, SIZE, a.view), native.MaskedRegion(b.base, SIZE, b.view), a, b
    a.close()
    b.close()


def _sync(pair, seed: bytes) -> None:
    _, _, a, b = pair
    a.view[: len(seed)] = seed
    b.view[: len(seed)] = seed


offsets = st.integers(-(1 << 40), 1 << 40)

ops = st.one_of(
    st.tuples(st.just("load"), offsets, st.sampled_from([1, 2, 4, 8])),
    st.tuples(st.just("store"), offsets, st.sampled_from([1, 2, 4, 8]), st.integers(0, (1 << 64) - 1)),
    st.tuples(st.just("read"), offsets, st.integers(0, 300)),
    st.tuples(st.just("write"), offsets, st.binary(max_size=300)),
    st.tuples(st.just("fill"), offsets, st.integers(0, 300), st.integers(0, 255)),
)


@given(st.lists(ops, max_size=30), st.binary(min_size=64, max_size=64))
def test_masked_region_equivalence(pair, program, seed) -> None:
    p, n, a, b = pair
    _sync(pair, seed * (SIZE // 64))
    for op, *args in program:
        assert getattr(p, op)(*args) == getattr(n, op)(*args), (op, args)
    assert bytes(a.view) == bytes(b.view)


def test_length_errors_agree(pair) -> None:
    p, n, _, _ = pair
    for impl in (p, n):
        with pytest.raises(ValueError):
            impl.read(0, SIZE + 1)
        with pytest.raises(ValueError):
            impl.read(0, -1)


row_stream = st.lists(st.tuples(st.integers(0, 9), st.integers(0, 255)), max_size=20).map(
    lambda pairs: bytes(v for pair in pairs for v in pair)
)


@given(row_stream, st.integers(-4, 40), st.integers(0, SIZE - 1), st.integers(0, SIZE - 1), st.integers(0, 8), st.integers(0, 60))
def test_decode_row_equivalence(pair, stream, avail, src, dst, x, width) -> None:
    p, n, a, b = pair
    _sync(pair, bytes(SIZE))
    p.write(src, stream)
    n.write(src, stream)
    assert p.decode_row(src, avail, dst, x, width) == n.decode_row(src, avail, dst, x, width)
    assert bytes(a.view) == bytes(b.view)


@given(st.binary(min_size=0, max_size=400), st.sets(st.integers(0, (1 << 64) - 1), max_size=3), st.data())
def test_scan_equivalence(blob, targets, data) -> None:
    native = kernels.implementation("cython")
    buf = bytearray(blob)
    for t in targets:
        if len(buf) >= 8 and data.draw(st.booleans()):
            at = data.draw(st.integers(0, len(buf) - 8))
            buf[at : at + 8] = t.to_bytes(8, "little")
    view = memoryview(bytes(buf))
    assert pure.scan_u64(view, frozenset(targets)) == native.scan_u64(view, frozenset(targets))


@pytest.mark.parametrize("impl", ["python", "cython"])
def test_u32_cells_and_spin(impl) -> None:
    k = kernels.implementation(impl)
    cell = ctypes.c_uint32(0)
    addr = ctypes.addressof(cell)
    k.store_u32(addr, 0xDEADBEEF)
    assert k.load_u32(addr) == 0xDEADBEEF == cell.value
    assert k.spin_wait(addr, 0xDEADBEEF, 1, 0)
    assert not k.spin_wait(addr, 1, 1000, 16)


@pytest.mark.parametrize("impl", ["python", "cython"])
def test_futex_wakeup(impl) -> None:
    k = kernels.implementation(impl)
    cell = ctypes.c_uint32(0)
    addr = ctypes.addressof(cell)
    k.futex_wait(addr, 1, 1_000_000)  # value differs: returns immediately
    t0 = time.monotonic()
    k.futex_wait(addr, 0, 20_000_000)  # times out
    assert time.monotonic() - t0 >= 0.015

    def wake() -> None:
        time.sleep(0.05)
        k.store_u32(addr, 1)
        k.futex_wake(addr)

    t = threading.Thread(target=wake)
    t.start()
    t0 = time.monotonic()
    while k.load_u32(addr) == 0:
        k.futex_wait(addr, 0, 5_000_000_000)
    t.join()
    assert time.monotonic() - t0 < 2.0


def test_env_forces_pure_fallback() -> None:
    env = dict(os.environ, SANDCAGE_PURE_PYTHON="1", PYTHONPATH=os.pathsep.join(sys.path))
    out = subprocess.run(
        [sys.executable, "-c", "import sandcage.kernels as k; print(k.IMPLEMENTATION)"], capture_output=True, text=True, env=env
    )
    assert out.stdout.strip() == pure.IMPLEMENTATION
    assert kernels.IMPLEMENTATION == kernels.implementation("cython").IMPLEMENTATION


def test_unknown_implementation() -> None:
    with pytest.raises(ValueError):
        kernels.implementation("rust")
