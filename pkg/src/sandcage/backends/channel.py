"""Shared-memory message channel between the host and a worker process.

Layout of the channel page (all fields little endian)::

    0   magic "SCG1"      4s
    4   version           u32
    8   sync_mode         u32   0 = SPIN, 1 = EVENT
    12  turn              u32   0 = host owns the channel, 1 = guest
    16  seq               u64   incremented by every send
    24  host_sleeping     u32   set while the host blocks in the kernel
    28  guest_sleeping    u32   set while the worker blocks in the kernel
    64  message           opcode u32, fn_or_slot u32, argc u32,
                          16 x (kind u32, value u64), status u32

The side that owns the turn writes a message, bumps ``seq`` and hands the
turn over.  SPIN waits busy-poll ``turn`` (bounded, then fall back to
blocking); EVENT waits block on a futex on ``turn``.  The sleeper flags let a
SPIN sender skip the wake syscall when nobody is asleep.
"""

from __future__ import annotations

import os
import struct
import time
from dataclasses import dataclass
from typing import Callable, Sequence

from .. import kernels
from ..errors import ProtocolViolation
from .base import SyncMode

MAGIC = b"SCG1"
VERSION = 1
CHANNEL_SIZE = 4096

HOST = 0
GUEST = 1

INVOKE = 1
RETURN = 2
CALLBACK = 3
CBRETURN = 4
MALLOC = 5
MFREE = 6
SHUTDOWN = 7
ABORT = 8
OPCODES = {INVOKE, RETURN, CALLBACK, CBRETURN, MALLOC, MFREE, SHUTDOWN, ABORT}

# ABORT reasons, carried in fn_or_slot; the code (if any) is in status
ABORT_EXIT = 0  # guest non-local exit
ABORT_UNWIND = 1  # host unwinding the current call / guest acknowledging it
ABORT_FAULT = 2  # guest code crashed
ABORT_ALLOC = 3
ABORT_FREE = 4

MAX_ARGS = 16

HEADER = struct.Struct("<4sIIIQII")
OFF_SYNC = 8
OFF_TURN = 12
OFF_SEQ = 16
OFF_SLEEP = (24, 28)
OFF_MSG = 64
MESSAGE = struct.Struct("<III" + "IQ" * MAX_ARGS + "I")

SPIN_LIMIT = 10**8
SPIN_CHUNK = 1 << 14
SLEEP_SLICE_NS = 20_000_000


def default_yield_every() -> int:
    # on a single core a spinner must give the peer the CPU on every iteration
    return 1 if (os.cpu_count() or 1) == 1 else 256


@dataclass(frozen=True)
class Message:
    opcode: int
    fn: int
    argc: int
    args: tuple[tuple[int, int], ...]
    status: int
    raw_tail_clean: bool = True

    def values(self) -> list[int]:
        return [v for _, v in self.args]


class Channel:
    def __init__(
        self,
        view: memoryview,
        addr: int,
        side: int,
        *,
        spin_limit: int = SPIN_LIMIT,
        yield_every: int | None = None,
    ) -> None:
        if len(view) < CHANNEL_SIZE:
            raise ValueError("channel page too small")
        self.view = view
        self.addr = addr
        self.side = side
        self.peer = 1 - side
        self.turn_addr = addr + OFF_TURN
        self.spin_limit = spin_limit
        self.yield_every = default_yield_every() if yield_every is None else yield_every
        self.sent = 0
        self.last_seq = 0
        # the host keeps its own copy; the worker can scribble on the header
        self.local_mode: SyncMode | None = None

    # --- header ---

    def init_header(self, mode: SyncMode, turn: int) -> None:
        HEADER.pack_into(self.view, 0, MAGIC, VERSION, int(mode), turn, 0, 0, 0)

    def check_header(self) -> None:
        magic, version, mode, turn, _seq, _h, _g = HEADER.unpack_from(self.view, 0)
        if magic != MAGIC or version != VERSION or mode not in (0, 1) or turn not in (0, 1):
            raise ProtocolViolation("bad channel header")

    @property
    def mode(self) -> SyncMode:
        if self.local_mode is not None:
            return self.local_mode
        raw = kernels.load_u32(self.addr + OFF_SYNC)
        return SyncMode.SPIN if raw == SyncMode.SPIN else SyncMode.EVENT

    def set_mode(self, mode: SyncMode) -> None:
        kernels.store_u32(self.addr + OFF_SYNC, int(mode))

    @property
    def turn(self) -> int:
        return int(kernels.load_u32(self.turn_addr))

    @property
    def seq(self) -> int:
        return int(struct.unpack_from("<Q", self.view, OFF_SEQ)[0])

    # --- messages ---

    def write(self, opcode: int, fn: int = 0, args: Sequence[tuple[int, int]] = (), status: int = 0, argc: int | None = None) -> None:
        if len(args) > MAX_ARGS:
            raise ValueError(f"at most {MAX_ARGS} arguments")
        flat: list[int] = []
        for kind, value in args:
            flat += (kind & 0xFFFFFFFF, value & 0xFFFFFFFFFFFFFFFF)
        flat += [0] * (2 * MAX_ARGS - len(flat))
        n = len(args) if argc is None else argc
        MESSAGE.pack_into(self.view, OFF_MSG, opcode & 0xFFFFFFFF, fn & 0xFFFFFFFF, n & 0xFFFFFFFF, *flat, status & 0xFFFFFFFF)

    def read(self) -> Message:
        fields = MESSAGE.unpack_from(self.view, OFF_MSG)
        opcode, fn, argc = fields[0], fields[1], fields[2]
        flat = fields[3:-1]
        pairs = tuple((flat[2 * i], flat[2 * i + 1]) for i in range(MAX_ARGS))
        n = min(argc, MAX_ARGS)
        clean = all(k == 0 and v == 0 for k, v in pairs[n:])
        return Message(opcode, fn, argc, pairs[:n], fields[-1], clean)

    # --- handoff ---

    def send(self, opcode: int, fn: int = 0, args: Sequence[tuple[int, int]] = (), status: int = 0, argc: int | None = None) -> None:
        self.write(opcode, fn, args, status, argc)
        self.sent += 1
        struct.pack_into("<Q", self.view, OFF_SEQ, self.seq + 1)
        kernels.store_u32(self.turn_addr, self.peer)
        if self.mode == SyncMode.EVENT or kernels.load_u32(self.addr + OFF_SLEEP[self.peer]):
            kernels.futex_wake(self.turn_addr, 1)

    def wait(self, poll: Callable[[], None]) -> Message:
        """Block until the peer hands the turn back, then read its message.

        ``poll`` runs periodically while waiting and raises to give up.
        """
        want = self.side
        if kernels.load_u32(self.turn_addr) != want:
            if self.mode == SyncMode.SPIN:
                self._spin(want, poll)
            if kernels.load_u32(self.turn_addr) != want:
                self._sleep(want, poll)
        seq = self.seq
        if seq <= self.last_seq:
            raise ProtocolViolation("channel sequence number did not advance")
        self.last_seq = seq
        return self.read()

    def _spin(self, want: int, poll: Callable[[], None]) -> None:
        spun = 0
        while spun < self.spin_limit:
            n = min(SPIN_CHUNK, self.spin_limit - spun)
            if kernels.spin_wait(self.turn_addr, want, n, self.yield_every):
                return
            spun += n
            poll()

    def _sleep(self, want: int, poll: Callable[[], None]) -> None:
        flag = self.addr + OFF_SLEEP[self.side]
        other = 1 - want
        kernels.store_u32(flag, 1)
        try:
            while kernels.load_u32(self.turn_addr) != want:
                kernels.futex_wait(self.turn_addr, other, SLEEP_SLICE_NS)
                if kernels.load_u32(self.turn_addr) == want:
                    break
                poll()
        finally:
            kernels.store_u32(flag, 0)


class Deadline:
    """``poll`` helper: raise once ``seconds`` have elapsed (``None`` = never)."""

    def __init__(self, seconds: float | None, on_expire: Callable[[], None]) -> None:
        self.end = None if seconds is None else time.monotonic() + seconds
        self.on_expire = on_expire

    def __call__(self) -> None:
        if self.end is not None and time.monotonic() > self.end:
            self.on_expire()
