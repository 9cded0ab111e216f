"""OS-process isolation: the guest library runs in a worker process.

A single shared file holds the channel page followed by the region.  The
host maps the region at a size-aligned address; the worker maps it wherever
the kernel puts it, so the only thing that crosses is 32-bit offsets.

Everything the worker can write (the whole file) is treated as hostile:
malformed messages are recorded as violations, answered with ABORT and the
current invocation is unwound.
"""

from __future__ import annotations

import atexit
import logging
import os
import queue
import secrets
import signal
import subprocess
import sys
import tempfile
import threading
from typing import TYPE_CHECKING, NoReturn, Sequence

from ..errors import CreationError, ProtocolViolation, TransportError
from ..guest import ARG_CALLBACK, ARG_SCALAR, FAULT_CODE, GuestExit, GuestLibrary
from ..region import AlignedMapping, RawMapping
from . import channel as ch
from .base import Backend, SyncMode

if TYPE_CHECKING:
    from ..runtime import Sandbox

log = logging.getLogger(__name__)

DEFAULT_TIMEOUT = 2.0
CREATE_TIMEOUT = 10.0
_PKG_ROOT = os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))


def shm_dir() -> str:
    return "/dev/shm" if os.path.isdir("/dev/shm") else tempfile.gettempdir()


def _worker_env() -> dict[str, str]:
    env = dict(os.environ)
    env["PYTHONPATH"] = os.pathsep.join(p for p in (_PKG_ROOT, env.get("PYTHONPATH")) if p)
    return env


class _ExecHandle:
    """A worker started with a fresh interpreter (our direct child)."""

    def __init__(self, cmd: list[str]) -> None:
        self._proc = subprocess.Popen(cmd, env=_worker_env(), stdin=subprocess.DEVNULL, close_fds=True)
        self.pid = self._proc.pid

    def poll(self) -> int | None:
        return self._proc.poll()

    def wait(self, timeout: float | None = None) -> int:
        return self._proc.wait(timeout)

    def kill(self) -> None:
        if self._proc.poll() is None:
            self._proc.kill()
            self._proc.wait()


class _ForkedHandle:
    """A worker forked by the fork server; its exit status arrives over the server pipe."""

    def __init__(self, server: "ForkServer", pid: int) -> None:
        self.server = server
        self.pid = pid

    def poll(self) -> int | None:
        return self.server.exit_code(self.pid)

    def wait(self, timeout: float | None = None) -> int:
        code = self.server.wait_exit(self.pid, timeout)
        if code is None:
            raise subprocess.TimeoutExpired(f"worker {self.pid}", timeout or 0)
        return code

    def kill(self) -> None:
        if self.poll() is None:
            try:
                os.kill(self.pid, signal.SIGKILL)
            except ProcessLookupError:
                pass
            self.wait(2.0)


class ForkServer:
    """A pre-imported worker image that forks one worker per sandbox.

    Starting a fresh interpreter per sandbox costs tens of milliseconds; a
    fork of an already-initialised, host-data-free process costs about one.
    """

    def __init__(self, python: str = sys.executable) -> None:
        cmd = [python, "-S", "-m", "sandcage.worker", "--zygote"]
        self.proc = subprocess.Popen(cmd, env=_worker_env(), stdin=subprocess.PIPE, stdout=subprocess.PIPE, close_fds=True)
        self._replies: "queue.Queue[str]" = queue.Queue()
        self._exits: dict[int, int] = {}
        self._cond = threading.Condition()
        self._lock = threading.Lock()
        self._reader = threading.Thread(target=self._read, name="sandcage-forkserver", daemon=True)
        self._reader.start()

    def alive(self) -> bool:
        return self.proc.poll() is None

    def _read(self) -> None:
        assert self.proc.stdout is not None
        for raw in self.proc.stdout:
            parts = raw.decode().split()
            if parts[:1] == ["exit"] and len(parts) == 3:
                with self._cond:
                    self._exits[int(parts[1])] = int(parts[2])
                    self._cond.notify_all()
            else:
                self._replies.put(" ".join(parts))
        self._replies.put("error fork server exited")
        with self._cond:
            self._cond.notify_all()

    def spawn(self, shm: str, size: int, guest: str) -> _ForkedHandle:
        assert self.proc.stdin is not None
        with self._lock:
            try:
                self.proc.stdin.write(f"{shm} {size} {guest}\n".encode())
                self.proc.stdin.flush()
                reply = self._replies.get(timeout=CREATE_TIMEOUT)
            except (OSError, queue.Empty) as exc:
                raise CreationError(f"fork server unavailable: {exc}") from exc
        kind, _, arg = reply.partition(" ")
        if kind != "pid":
            raise CreationError(f"fork server: {arg}")
        return _ForkedHandle(self, int(arg))

    def exit_code(self, pid: int) -> int | None:
        with self._cond:
            code = self._exits.get(pid)
        if code is None and not self.alive() and not self._reader.is_alive():
            return -signal.SIGKILL  # children die with the server
        return code

    def wait_exit(self, pid: int, timeout: float | None) -> int | None:
        with self._cond:
            self._cond.wait_for(lambda: pid in self._exits or not self._reader.is_alive(), timeout)
        return self.exit_code(pid)

    def close(self) -> None:
        if self.proc.stdin is not None and not self.proc.stdin.closed:
            try:
                self.proc.stdin.close()
            except OSError:
                pass
        try:
            self.proc.wait(2.0)
        except subprocess.TimeoutExpired:
            self.proc.kill()


_server: ForkServer | None = None
_server_lock = threading.Lock()


def fork_server(python: str = sys.executable) -> ForkServer:
    """The process-wide fork server, started on first use."""
    global _server
    with _server_lock:
        if _server is None or not _server.alive():
            _server = ForkServer(python)
        return _server


@atexit.register
def _stop_fork_server() -> None:
    if _server is not None:
        _server.close()


def _parse_mode(mode: "SyncMode | str") -> SyncMode:
    return mode if isinstance(mode, SyncMode) else SyncMode[str(mode).upper()]


class ProcessBackend(Backend):
    name = "process"
    isolating = True

    def __init__(
        self,
        library: GuestLibrary,
        variant: str = "clean",
        *,
        guest_spec: str | None = None,
        sync: "SyncMode | str" = SyncMode.EVENT,
        timeout: float | None = DEFAULT_TIMEOUT,
        spin_limit: int = ch.SPIN_LIMIT,
        yield_every: int | None = None,
        python: str = sys.executable,
        spawn: str | None = None,
    ) -> None:
        super().__init__(library, variant)
        self.guest_spec = guest_spec or f"{library.name}:{variant}"
        self._mode = _parse_mode(sync)
        self.timeout = timeout
        self.spin_limit = spin_limit
        self.yield_every = yield_every
        self.python = python
        self.spawn = spawn or os.environ.get("SANDCAGE_WORKER_SPAWN", "fork-server")
        if self.spawn not in ("fork-server", "exec"):
            raise ValueError("spawn must be 'fork-server' or 'exec'")
        self.proc: _ExecHandle | _ForkedHandle | None = None
        self.channel: ch.Channel | None = None
        self._chan_map: RawMapping | None = None
        self._sandbox: "Sandbox | None" = None
        self._dead = False

    # --- lifecycle ---

    def attach(self, sandbox: "Sandbox") -> AlignedMapping:
        self._sandbox = sandbox
        name = f"sandcage-{os.getpid()}-{secrets.token_hex(6)}"
        path = os.path.join(shm_dir(), name)
        fd = os.open(path, os.O_RDWR | os.O_CREAT | os.O_EXCL, 0o600)
        try:
            os.ftruncate(fd, ch.CHANNEL_SIZE + sandbox.size)
            self._chan_map = RawMapping(fd, ch.CHANNEL_SIZE, 0)
            self.mapping = AlignedMapping(sandbox.size, fd, offset=ch.CHANNEL_SIZE)
            self.channel = ch.Channel(
                self._chan_map.view, self._chan_map.base, ch.HOST, spin_limit=self.spin_limit, yield_every=self.yield_every
            )
            self.channel.local_mode = self._mode
            self.channel.init_header(self._mode, ch.GUEST)
            if self.spawn == "exec":
                cmd = [self.python, "-S", "-m", "sandcage.worker", "--shm", path, "--size", str(sandbox.size), "--guest", self.guest_spec]
                self.proc = _ExecHandle(cmd)
            else:
                self.proc = fork_server(self.python).spawn(path, sandbox.size, self.guest_spec)
            try:
                ready = self._recv(CREATE_TIMEOUT)
            except TransportError as exc:
                self._kill()
                raise CreationError(f"worker did not start: {exc}") from exc
            if ready is None or ready.opcode != ch.RETURN:
                self._kill()
                raise CreationError("worker handshake failed")
        except BaseException:
            if self.mapping is not None:
                self.mapping.close()
            raise
        finally:
            os.close(fd)
            os.unlink(path)  # both sides hold mappings now
        return self.mapping

    def close(self) -> None:
        proc = self.proc
        if proc is not None and proc.poll() is None:
            if not self._dead and self.channel is not None and self.channel.turn == ch.HOST:
                try:
                    self.channel.send(ch.SHUTDOWN)
                    proc.wait(1.0)
                except (subprocess.TimeoutExpired, OSError):
                    pass
            self._kill()
        self._dead = True
        self.channel = None
        self._chan_map = None

    def _kill(self) -> None:
        if self.proc is not None:
            self.proc.kill()

    @property
    def pid(self) -> int | None:
        return self.proc.pid if self.proc else None

    # --- transport ---

    def _fail(self, why: str) -> NoReturn:
        self._dead = True
        self._kill()
        raise TransportError(why)

    def _poller(self, timeout: float | None) -> ch.Deadline:
        deadline = ch.Deadline(timeout, lambda: self._fail(f"worker did not answer within {timeout}s"))

        def poll() -> None:
            if self.proc is not None and self.proc.poll() is not None:
                self._fail(f"worker exited with code {self.proc.poll()}")
            deadline()

        return poll  # type: ignore[return-value]

    def _live_channel(self) -> ch.Channel:
        if self._dead or self.channel is None:
            raise TransportError("worker transport is closed")
        return self.channel

    def _send(self, opcode: int, fn: int = 0, args: Sequence[tuple[int, int]] = (), status: int = 0) -> None:
        self._live_channel().send(opcode, fn, args, status)

    def _recv(self, timeout: float | None = None) -> ch.Message | None:
        """Next worker message, or ``None`` if the channel header was tampered with."""
        chan = self._live_channel()
        try:
            return chan.wait(self._poller(self.timeout if timeout is None else timeout))
        except ProtocolViolation:
            return None

    # --- calls ---

    def call(self, index: int, args: Sequence[tuple[int, int]]) -> int:
        self._send(ch.INVOKE, index, args)
        return self._serve()

    def _serve(self) -> int:
        from ..runtime import _Unwind

        sb = self._sandbox
        assert sb is not None
        while True:
            msg = self._recv()
            if msg is None:
                self._malformed("channel sequence number did not advance")
            if msg.argc > ch.MAX_ARGS or not msg.raw_tail_clean:
                self._malformed(f"bad argument count {msg.argc}")
            op = msg.opcode
            if op == ch.RETURN:
                if msg.argc > 1:
                    self._malformed(f"RETURN with {msg.argc} values")
                return msg.args[0][1] if msg.argc else 0
            if op == ch.ABORT:
                if msg.fn == ch.ABORT_EXIT:
                    raise GuestExit(msg.status)
                if msg.fn == ch.ABORT_FAULT:
                    raise GuestExit(FAULT_CODE)
                raise _Unwind(sb.record_violation(ProtocolViolation(f"unsolicited ABORT reason {msg.fn}")))
            if op == ch.CALLBACK:
                if any(kind not in (ARG_SCALAR, ARG_CALLBACK) for kind, _ in msg.args):
                    self._malformed("callback argument with unknown kind")
                try:
                    ret = sb.dispatch_trampoline(msg.fn, msg.values())
                except BaseException:
                    self._abort_guest()
                    raise
                self._send(ch.CBRETURN, msg.fn, [(ARG_SCALAR, ret)])
                continue
            self._malformed(f"unexpected opcode {op} from worker")

    def _malformed(self, why: str) -> NoReturn:
        from ..runtime import _Unwind

        assert self._sandbox is not None
        exc = self._sandbox.record_violation(ProtocolViolation(why))
        self._abort_guest()
        raise _Unwind(exc)

    def _abort_guest(self) -> None:
        """Tell the worker to unwind the current call and wait for its acknowledgement."""
        assert self._sandbox is not None
        self._send(ch.ABORT, ch.ABORT_UNWIND)
        while True:
            msg = self._recv()
            if msg is not None and msg.opcode in (ch.ABORT, ch.RETURN) and msg.argc <= 1:
                return
            self._sandbox.record_violation(ProtocolViolation("worker kept talking after ABORT"))
            self._send(ch.ABORT, ch.ABORT_UNWIND)

    # --- heap ---

    def _heap_op(self, opcode: int, args: Sequence[tuple[int, int]]) -> int:
        from ..errors import AllocError, InvalidFree

        self._send(opcode, 0, args)
        msg = self._recv()
        if msg is not None and msg.opcode == ch.RETURN and msg.argc <= 1:
            return msg.args[0][1] if msg.argc else 0
        if msg is not None and msg.opcode == ch.ABORT and msg.fn in (ch.ABORT_ALLOC, ch.ABORT_FREE):
            raise (AllocError if msg.fn == ch.ABORT_ALLOC else InvalidFree)(f"worker heap refused: status {msg.status}")
        assert self._sandbox is not None
        exc = self._sandbox.record_violation(ProtocolViolation("bad reply to heap request"))
        self._abort_guest()
        raise exc

    def malloc(self, nbytes: int, align: int) -> int:
        return self._heap_op(ch.MALLOC, [(ARG_SCALAR, nbytes), (ARG_SCALAR, align)])

    def free(self, off: int) -> None:
        self._heap_op(ch.MFREE, [(ARG_SCALAR, off)])

    # --- tuning ---

    @property
    def sync_mode(self) -> SyncMode:
        return self._mode

    def set_sync_mode(self, mode: SyncMode) -> None:
        self._mode = _parse_mode(mode)
        chan = self._live_channel()
        chan.local_mode = self._mode
        chan.set_mode(self._mode)

    def pin(self, core: int) -> None:
        if self.proc is None or not hasattr(os, "sched_setaffinity"):
            raise NotImplementedError("pinning is not supported on this platform")
        os.sched_setaffinity(self.proc.pid, {core})
