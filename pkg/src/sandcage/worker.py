"""Worker process: hosts one guest library behind the shared-memory channel.

Usage: ``python -m sandcage.worker --shm <name> --size <bytes> --guest <lib[:variant]>``

Exit codes: 0 after SHUTDOWN, 2 on a protocol violation by the host side,
3 when an ABORT arrives with no call to abort.

``--zygote`` starts a fork server instead: it imports everything a worker
needs once, then forks a fresh worker per request read from stdin
(``<shm> <size> <guest>`` lines).  It answers each request with
``pid <n>`` and reports ``exit <pid> <code>`` as children finish.  It holds
no host data, so a forked worker starts from a clean image.
"""

from __future__ import annotations

import argparse
import ctypes
import os
import select
import signal
import sys
from typing import Sequence

from .backends import channel as ch
from .errors import AllocError, InvalidFree, ResolutionError
from .guest import ARG_SCALAR, GuestEnv, GuestExit, GuestLibrary, HostAbort, Memory, load_library, parse_guest
from .heap import GuestHeap
from .kernels import MaskedRegion
from .region import RawMapping

EXIT_OK = 0
EXIT_PROTOCOL = 2
EXIT_ABORTED = 3

_PR_SET_PDEATHSIG = 1
_PR_SET_NO_NEW_PRIVS = 38


class _HostGone(Exception):
    pass


class _BadMessage(Exception):
    pass


def restrict_privileges() -> None:
    """Best effort: die with the parent and never gain privileges via exec."""
    try:
        libc = ctypes.CDLL(None, use_errno=True)
        libc.prctl(_PR_SET_PDEATHSIG, signal.SIGKILL, 0, 0, 0)
        libc.prctl(_PR_SET_NO_NEW_PRIVS, 1, 0, 0, 0)
    except (OSError, AttributeError):
        pass


class WorkerEnv(GuestEnv):
    def __init__(self, mem: Memory, size: int, variant: str, heap: GuestHeap, worker: "Worker") -> None:
        super().__init__(mem, size, variant)
        self._heap = heap
        self._worker = worker

    def call(self, slot: int, *args: int) -> int:
        return self._worker.callback(slot, args)

    def malloc(self, nbytes: int, align: int = 16) -> int:
        try:
            return self._heap.malloc(nbytes, align)
        except AllocError:
            return 0

    def free(self, off: int) -> None:
        try:
            self._heap.free(off)
        except InvalidFree:
            pass

    def fuzz(self, seed: int, count: int) -> int:
        return self._worker.fuzz(seed, count)


class Worker:
    def __init__(self, channel: ch.Channel, library: GuestLibrary, mem: Memory, size: int, variant: str) -> None:
        self.channel = channel
        self.library = library
        self.heap = GuestHeap(size)
        self.env = WorkerEnv(mem, size, variant, self.heap, self)
        self.ppid = os.getppid()

    def _poll(self) -> None:
        if os.getppid() != self.ppid:
            raise _HostGone()

    def _wait(self) -> ch.Message:
        return self.channel.wait(self._poll)

    def _reply(self, opcode: int, fn: int = 0, value: int | None = None, status: int = 0) -> None:
        args = [] if value is None else [(ARG_SCALAR, value)]
        self.channel.send(opcode, fn, args, status)

    def serve(self) -> int:
        self._reply(ch.RETURN)  # ready
        try:
            while True:
                msg = self._wait()
                if msg.opcode == ch.SHUTDOWN:
                    return EXIT_OK
                if msg.opcode == ch.ABORT:
                    return EXIT_ABORTED
                if not self._handle(msg):
                    return EXIT_PROTOCOL
        except _BadMessage:
            return EXIT_PROTOCOL
        except _HostGone:
            return EXIT_ABORTED
        finally:
            self.env.state["closing"] = True
            self.env.join_threads(0.2)

    def _handle(self, msg: ch.Message) -> bool:
        """Serve one host request; False if it is not a request."""
        if msg.argc > ch.MAX_ARGS:
            raise _BadMessage()
        if msg.opcode == ch.INVOKE:
            self._invoke(msg)
        elif msg.opcode == ch.MALLOC:
            nbytes, align = (msg.values() + [0, 16])[:2]
            try:
                self._reply(ch.RETURN, value=self.heap.malloc(nbytes, align or 16))
            except (AllocError, ValueError):
                self._reply(ch.ABORT, ch.ABORT_ALLOC)
        elif msg.opcode == ch.MFREE:
            try:
                self.heap.free(msg.values()[0] if msg.argc else 0)
                self._reply(ch.RETURN, value=0)
            except InvalidFree:
                self._reply(ch.ABORT, ch.ABORT_FREE)
        else:
            return False
        return True

    def _invoke(self, msg: ch.Message) -> None:
        try:
            fn = self.library.function(msg.fn)
        except ResolutionError:
            self._reply(ch.ABORT, ch.ABORT_FAULT)
            return
        try:
            ret = fn.fn(self.env, *msg.values())
        except GuestExit as e:
            self._reply(ch.ABORT, ch.ABORT_EXIT, status=e.code)
        except HostAbort:
            self._reply(ch.ABORT, ch.ABORT_UNWIND)
        except (_BadMessage, _HostGone):
            raise
        except Exception:
            self._reply(ch.ABORT, ch.ABORT_FAULT)
        else:
            self._reply(ch.RETURN, msg.fn, 0 if ret is None else int(ret) & 0xFFFFFFFFFFFFFFFF)

    def callback(self, slot: int, args: Sequence[int]) -> int:
        self.channel.send(ch.CALLBACK, slot, [(ARG_SCALAR, a & 0xFFFFFFFFFFFFFFFF) for a in args])
        while True:
            msg = self._wait()
            if msg.opcode == ch.CBRETURN:
                return msg.args[0][1] if msg.argc else 0
            if msg.opcode == ch.ABORT:
                raise HostAbort()
            if not self._handle(msg):
                raise _BadMessage()

    def fuzz(self, seed: int, count: int) -> int:
        """Send ``count`` malformed messages; each should be answered with ABORT."""
        import random

        rng = random.Random(seed)
        aborts = 0
        for _ in range(count):
            shape = rng.randrange(4)
            args: list[tuple[int, int]] = [(rng.getrandbits(32), rng.getrandbits(64)) for _ in range(rng.randrange(4))]
            argc = None
            if shape == 0:
                op = rng.choice([0, ch.INVOKE, ch.CBRETURN, ch.MALLOC, ch.MFREE, ch.SHUTDOWN, 9, rng.getrandbits(32)])
                if op in (ch.RETURN, ch.CALLBACK, ch.ABORT):  # legitimate guest opcodes
                    op = 9
                slot = rng.getrandbits(32)
            elif shape == 1:
                op, slot, argc = ch.CALLBACK, rng.randrange(64), rng.randrange(ch.MAX_ARGS + 1, 1 << 32)
            elif shape == 2:
                op, slot = ch.CALLBACK, rng.randrange(64, 1 << 32)
                args = [(ARG_SCALAR, v) for _, v in args]
            else:
                op, slot = ch.CALLBACK, rng.randrange(64)
                args = [(ARG_SCALAR, v) for _, v in args] + [(ARG_SCALAR, 1 + rng.getrandbits(32))]
                argc = len(args) - 1  # stray data past argc
            self.channel.send(op, slot, args, rng.getrandbits(32), argc)
            if self._wait().opcode == ch.ABORT:
                aborts += 1
        return aborts


def run(shm: str, size: int, guest: str) -> int:
    restrict_privileges()
    path = shm if os.sep in shm else os.path.join("/dev/shm", shm)
    fd = os.open(path, os.O_RDWR)
    try:
        chan_map = RawMapping(fd, ch.CHANNEL_SIZE, 0)
        region = RawMapping(fd, size, ch.CHANNEL_SIZE)
    finally:
        os.close(fd)
    channel = ch.Channel(chan_map.view, chan_map.base, ch.GUEST)
    try:
        channel.check_header()
    except Exception:
        return EXIT_PROTOCOL
    libname, variant = parse_guest(guest)
    library = load_library(libname)
    worker = Worker(channel, library, MaskedRegion(region.base, size, region.view), size, variant)
    return worker.serve()


def _fork_worker(line: str) -> int:
    shm, size, guest = line.split()
    pid = os.fork()
    if pid:
        return pid
    code = 1
    try:
        signal.signal(signal.SIGCHLD, signal.SIG_DFL)
        signal.set_wakeup_fd(-1)
        null = os.open(os.devnull, os.O_RDWR)
        os.dup2(null, 0)
        os.dup2(null, 1)
        code = run(shm, int(size), guest)
    except BaseException:
        code = 1
    finally:
        os._exit(code)


def zygote(preload: Sequence[str] = ("rli",)) -> int:
    restrict_privileges()
    for name in preload:
        load_library(name)
    rd, wr = os.pipe()
    os.set_blocking(wr, False)
    signal.set_wakeup_fd(wr)
    signal.signal(signal.SIGCHLD, lambda *_: None)
    out = sys.stdout
    children: set[int] = set()
    buf = b""
    while True:
        ready, _, _ = select.select([0, rd], [], [])
        if rd in ready:
            os.read(rd, 4096)
        while children:
            pid, status = os.waitpid(-1, os.WNOHANG)
            if not pid:
                break
            children.discard(pid)
            out.write(f"exit {pid} {os.waitstatus_to_exitcode(status)}\n")
            out.flush()
        if 0 in ready:
            data = os.read(0, 4096)
            if not data:  # host went away
                for pid in children:
                    os.kill(pid, signal.SIGKILL)
                return 0
            buf += data
            while b"\n" in buf:
                line, buf = buf.split(b"\n", 1)
                try:
                    pid = _fork_worker(line.decode())
                except (ValueError, OSError) as exc:
                    out.write(f"error {exc}\n")
                else:
                    children.add(pid)
                    out.write(f"pid {pid}\n")
                out.flush()


def main(argv: Sequence[str] | None = None) -> int:
    p = argparse.ArgumentParser(prog="sandcage-worker")
    p.add_argument("--shm", help="shared file name (under /dev/shm) or path")
    p.add_argument("--size", type=int, help="region size in bytes")
    p.add_argument("--guest", default="rli", help="guest library[:variant]")
    p.add_argument("--zygote", action="store_true", help="run as a fork server for workers")
    args = p.parse_args(argv)
    if args.zygote:
        return zygote()
    if args.shm is None or args.size is None:
        p.error("--shm and --size are required")
    return run(args.shm, args.size, args.guest)


if __name__ == "__main__":
    sys.exit(main())
