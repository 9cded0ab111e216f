"""The untrusted side: a streaming RLI decoder library.

Written like a C library against ``GuestEnv``: it only knows offsets, keeps
its own state in guest memory, asks the host for input through the
``fill_input_buffer`` slot stored in the shared record and bails out through
``env.exit``.  Variants ``m1``..``m8`` are fault-injected builds used by the
attack suite; ``clean`` is the honest library.
"""

from __future__ import annotations

import time

from ..guest import GuestEnv, GuestLibrary, register_library
from ..kernels import ROW_DONE, ROW_NEED_INPUT
from ..layout import record
from .abi import (
    ERR_BAD_HEADER,
    ERR_BAD_MAGIC,
    ERR_CORRUPT,
    ERR_TOO_MANY_ROWS,
    ERR_TRUNCATED,
    FIELDS,
    HEADER_OK,
    HEADER_TABLES_ONLY,
    INFO_SIZE,
    NO_CALLBACK,
    OFF,
    ROW_OK,
)
from .format import HEADER, MAGIC

record("RliInfo", FIELDS, INFO_SIZE)  # the guest only needs the layout, not the typed view
lib = register_library(GuestLibrary("rli"), "sandcage.rli.guest")

VARIANTS = ("clean", "m1", "m2", "m3", "m4", "m5", "m6", "m7", "m8")

FORGED_SLOT = 37
M1_EXCESS = 1000
M8_SKIP = -64  # a negative skip walks the input pointer backwards
# deliberately unaligned, so no guess can coincide with a real mapping or object
M6_GUESSES = (0x00007F00DEADBEE7, 0x000055555555ABC7, 0x00007FFFF7A3C0D3)


def _ld(g: GuestEnv, info: int, name: str) -> int:
    return g.mem.load(info + OFF[name], 4)


def _st(g: GuestEnv, info: int, name: str, value: int) -> None:
    g.mem.store(info + OFF[name], 4, value)


def _fill(g: GuestEnv, info: int) -> bool:
    if g.variant == "m2":
        _st(g, info, "next_input_offset", (g.size + 0x40) & 0xFFFFFFFF)
    if g.variant == "m7":
        # hand the host another invocation's token
        cur = _ld(g, info, "client_slot")
        last = g.state.get("m7_last")
        g.state["m7_last"] = cur
        if last is not None and last != cur:
            _st(g, info, "client_slot", last)
    slot = _ld(g, info, "fill_input_buffer")
    if g.variant == "m3":
        slot = FORGED_SLOT
    return bool(g.call(slot, info) & 0xFFFFFFFF)


def _need(g: GuestEnv, info: int, n: int) -> bool:
    while _ld(g, info, "bytes_in_buffer") < n:
        if not _fill(g, info):
            return False
    return True


def _take(g: GuestEnv, info: int, n: int) -> bytes:
    src = _ld(g, info, "next_input_offset")
    data = g.mem.read(src, n)
    _st(g, info, "next_input_offset", src + n)
    _st(g, info, "bytes_in_buffer", _ld(g, info, "bytes_in_buffer") - n)
    return data


def _mutator(g: GuestEnv, info: int) -> None:
    off = info + OFF["output_scanline"]
    key = ("m5", info)
    while g.state.get(key) and not g.state.get("closing"):
        legit = g.state.get(("m5_line", info), 0)
        g.mem.store(off, 4, g.state.get(("m5_evil", info), legit + M1_EXCESS))
        g.mem.store(off, 4, legit)


def start_mutator(g: GuestEnv, info: int) -> None:
    if not g.state.get(("m5", info)):
        g.state[("m5", info)] = True
        g.spawn(lambda: _mutator(g, info), name="m5-mutator")


def stop_mutator(g: GuestEnv, info: int) -> None:
    g.state[("m5", info)] = False
    g.join_threads()


@lib.export("ref:RliInfo", ["u32"])
def rli_create(g: GuestEnv, capacity: int) -> int:
    if g.variant == "m4":
        g.call(0, 0)  # nobody has registered anything yet
    info = g.malloc(INFO_SIZE, 16)
    if not info:
        return 0
    cap = max(16, min(capacity, 1 << 20))
    buf = g.malloc(cap, 16)
    if not buf:
        g.free(info)
        return 0
    g.mem.fill(info, INFO_SIZE, 0)
    for key in ("m5_line", "m5_evil"):
        g.state.pop((key, info), None)  # the offset may be reused from an earlier decoder
    _st(g, info, "input_buffer", buf)
    _st(g, info, "input_capacity", cap)
    _st(g, info, "next_input_offset", buf)
    _st(g, info, "fill_input_buffer", NO_CALLBACK)
    _st(g, info, "skip_input_data", NO_CALLBACK)
    if g.variant == "m6":
        g.mem.store(info + OFF["reserved"], 4, M6_GUESSES[0] & 0xFFFFFFFF)
        for i, guess in enumerate(M6_GUESSES):
            g.mem.store(buf + cap - 8 * (i + 1), 8, guess)
    return info


@lib.export("u32", ["ref:RliInfo", "u32"])
def rli_read_header(g: GuestEnv, info: int, require_image: int) -> int:
    if not _need(g, info, HEADER.size):
        if not require_image:
            return HEADER_TABLES_ONLY
        g.exit(ERR_TRUNCATED)
    magic, w, h = HEADER.unpack(_take(g, info, HEADER.size))
    if magic != MAGIC:
        g.exit(ERR_BAD_MAGIC)
    if w == 0 or h == 0:
        g.exit(ERR_BAD_HEADER)
    _st(g, info, "width", w)
    _st(g, info, "height", h)
    _st(g, info, "output_scanline", 0)
    _st(g, info, "status", HEADER_OK)
    if g.variant == "m8":
        g.call(_ld(g, info, "skip_input_data"), info, M8_SKIP & 0xFFFFFFFF)
    return HEADER_OK


@lib.export("u32", ["ref:RliInfo", "ref"])
def rli_decode_row(g: GuestEnv, info: int, row: int) -> int:
    w = _ld(g, info, "width")
    h = _ld(g, info, "height")
    line = _ld(g, info, "output_scanline")
    if g.variant == "m5":
        line = g.state.get(("m5_line", info), line)
    if line >= h:
        g.exit(ERR_TOO_MANY_ROWS)
    src = _ld(g, info, "next_input_offset")
    avail = _ld(g, info, "bytes_in_buffer")
    x = 0
    while True:
        src, avail, x, state = g.mem.decode_row(src, avail, row, x, w)
        if state == ROW_DONE:
            break
        if state != ROW_NEED_INPUT:
            g.exit(ERR_CORRUPT)
        _st(g, info, "next_input_offset", src)
        _st(g, info, "bytes_in_buffer", avail)
        if not _fill(g, info):
            g.exit(ERR_TRUNCATED)
        src = _ld(g, info, "next_input_offset")
        avail = _ld(g, info, "bytes_in_buffer")
    _st(g, info, "next_input_offset", src)
    _st(g, info, "bytes_in_buffer", avail)
    if g.variant == "m1":
        _st(g, info, "output_scanline", h + M1_EXCESS)
    else:
        _st(g, info, "output_scanline", line + 1)
    if g.variant == "m5":
        g.state[("m5_line", info)] = line + 1
        start_mutator(g, info)
    return ROW_OK


@lib.export("void", ["ref:RliInfo"])
def rli_destroy(g: GuestEnv, info: int) -> None:
    if g.state.get(("m5", info)):
        stop_mutator(g, info)
    if info:
        g.free(_ld(g, info, "input_buffer"))
        g.free(info)


# --- probes used by tests and benchmarks ------------------------------------------


@lib.export("u32")
def rli_noop(g: GuestEnv) -> int:
    return 0


@lib.export("u32", ["u32"])
def echo(g: GuestEnv, x: int) -> int:
    return x


@lib.export("u32", ["u32", "u32"])
def call_slot(g: GuestEnv, slot: int, arg: int) -> int:
    return g.call(slot, arg)


@lib.export("void", ["u32"])
def exit_with(g: GuestEnv, code: int) -> None:
    g.exit(code)


@lib.export("u32", ["u32"])
def sleep_ms(g: GuestEnv, ms: int) -> int:
    time.sleep(ms / 1000)
    return ms


@lib.export("u32", ["ref", "u32", "u32"])
def scribble(g: GuestEnv, off: int, n: int, seed: int) -> int:
    """Fill ``n`` bytes at ``off`` with a seeded pattern (a stand-in for guest work)."""
    x = seed & 0xFFFFFFFF or 1
    for i in range(n):
        x ^= (x << 13) & 0xFFFFFFFF
        x ^= x >> 17
        x ^= (x << 5) & 0xFFFFFFFF
        g.mem.store(off + i, 1, x)
    return x


@lib.export("u32", ["u32", "u32"])
def fuzz_channel(g: GuestEnv, seed: int, count: int) -> int:
    """Send malformed messages to the host (only meaningful across a process channel)."""
    fuzz = getattr(g, "fuzz", None)
    return 0 if fuzz is None else int(fuzz(seed, count))


@lib.internal("u32")
def rli_selftest(g: GuestEnv) -> int:
    return 0x5E1F
