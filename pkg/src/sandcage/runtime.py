"""Sandbox lifecycle, invocation, callbacks and host-mediated exits."""

from __future__ import annotations

import itertools
import logging
import os
import threading
from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Sequence, TypeVar, Union, overload

from . import swizzle
from .backends.base import Backend, SyncMode
from .errors import (
    BoundsViolation,
    CallbackViolation,
    CreationError,
    GuestAbort,
    HostReferenceError,
    ProtocolViolation,
    SandboxBusy,
    SandboxDead,
    ResolutionError,
    SlotsExhausted,
    TaintError,
    TransportError,
    Violation,
)
from .guest import ARG_CALLBACK, ARG_REF, ARG_SCALAR, GuestExit, Signature, load_library, parse_guest
from .layout import RecordLayout
from .machine import ILP32, CallbackKind, Kind, MachineModel, RefKind, ScalarKind
from .records import GuestRecord
from .region import MIN_REGION, AlignedMapping, is_power_of_two
from .taint import NO_CALLBACK, Tainted, TaintedGuestRef, _make

log = logging.getLogger("sandcage.runtime")

DEFAULT_REGION_SIZE = 1 << 26
CALLBACK_SLOTS = 64
CONTEXT_KEYS = 16
MAX_DEPTH = 8

GuestArg = Union[int, bool, Tainted[Any], TaintedGuestRef, GuestRecord, "CallbackRegistration", None]
CbArg = TypeVar("CbArg", bound=Union[Tainted[Any], TaintedGuestRef])
CbArg2 = TypeVar("CbArg2", bound=Union[Tainted[Any], TaintedGuestRef])
CbArg3 = TypeVar("CbArg3", bound=Union[Tainted[Any], TaintedGuestRef])
CbArg4 = TypeVar("CbArg4", bound=Union[Tainted[Any], TaintedGuestRef])
R = TypeVar("R", bound=GuestRecord)
CbRet = Union[int, bool, Tainted[Any], TaintedGuestRef, GuestRecord, None]

_ids = itertools.count(1)


def default_region_size() -> int:
    env = os.environ.get("SANDCAGE_REGION_SIZE")
    return int(env, 0) if env else DEFAULT_REGION_SIZE


class _Unwind(BaseException):
    """Carries an exception out through guest frames to the outermost invoke.

    A ``BaseException`` so that ordinary ``except Exception`` blocks in host
    callbacks do not swallow it, while their ``finally``/``with`` exits run.
    """

    def __init__(self, exc: BaseException) -> None:
        super().__init__(exc)
        self.exc = exc


@dataclass(frozen=True)
class FunctionRef:
    name: str
    index: int
    signature: Signature
    sandbox_id: str


@dataclass
class _Frame:
    thread: int
    context: dict[int, object]


class CallbackRegistration:
    """A host function reachable from the guest through one trampoline slot."""

    def __init__(self, sandbox: "Sandbox", slot: int, fn: Callable[..., CbRet], signature: Signature) -> None:
        self.sandbox = sandbox
        self.slot = slot
        self.fn = fn
        self.signature = signature
        self.active = True

    def unregister(self) -> None:
        self.sandbox.unregister_callback(self)

    def __enter__(self) -> "CallbackRegistration":
        return self

    def __exit__(self, *exc: object) -> None:
        self.unregister()

    def __repr__(self) -> str:
        state = "active" if self.active else "inactive"
        return f"CallbackRegistration(slot={self.slot}, {state}, {self.sandbox.id})"


class Sandbox:
    """One isolation region plus its backend, callback table and invocation state."""

    def __init__(
        self,
        backend: Backend,
        size: int | None = None,
        *,
        model: MachineModel = ILP32,
        busy: str = "block",
    ) -> None:
        size = default_region_size() if size is None else size
        if not is_power_of_two(size) or size < MIN_REGION:
            raise CreationError(f"region size {size} must be a power of two >= {MIN_REGION}")
        if size > 1 << 32:
            raise CreationError("guest offsets are 32-bit; region size is capped at 4 GiB")
        if busy not in ("block", "error"):
            raise ValueError("busy must be 'block' or 'error'")
        self.id = f"sb-{next(_ids)}"
        self.size = size
        self.model = model
        self.backend = backend
        self.busy = busy
        self.alive = False
        self.violations: deque[Violation] = deque(maxlen=1024)
        self.violation_counts: Counter[str] = Counter()
        self._callbacks: list[CallbackRegistration | None] = [None] * CALLBACK_SLOTS
        self._lock = threading.RLock()
        self._frames: list[_Frame] = []
        self._pending: dict[int, dict[int, object]] = {}
        self._functions: dict[str, FunctionRef] = {}
        try:
            self._mapping: AlignedMapping = backend.attach(self)
        except CreationError:
            raise
        except (OSError, ValueError, MemoryError) as exc:
            raise CreationError(f"could not create {backend.name} sandbox: {exc}") from exc
        if self._mapping.base % size:
            backend.close()
            raise CreationError("region base is not size-aligned")
        self.alive = True

    # --- region -----------------------------------------------------------------------

    @property
    def base(self) -> int:
        return self._mapping.base

    @property
    def view(self) -> memoryview:
        if not self.alive:
            raise SandboxDead(f"sandbox {self.id} is dead")
        return self._mapping.view

    @property
    def mapping(self) -> AlignedMapping:
        return self._mapping

    def memory_bytes(self) -> int:
        """Resident bytes of the region (what this sandbox actually costs)."""
        return self._mapping.resident_bytes()

    def swizzle_to_guest(self, x: "TaintedGuestRef | int") -> int:
        addr = x.host_address() if isinstance(x, TaintedGuestRef) else x
        return swizzle.to_guest(addr, self.size, self.base)

    def swizzle_to_host(self, guest_off: int, example_host_addr: int | None = None) -> int:
        return swizzle.to_host(guest_off, example_host_addr or self.base, self.size)

    def record_violation(self, exc: Violation) -> Violation:
        self.violations.append(exc)
        self.violation_counts[type(exc).__name__] += 1
        log.debug("%s: %s", self.id, exc)
        return exc

    def _check_alive(self) -> None:
        if not self.alive:
            raise SandboxDead(f"sandbox {self.id} is dead")

    # --- lifecycle --------------------------------------------------------------------

    def destroy(self) -> None:
        if not self.alive and self._mapping.closed:
            return
        me = threading.get_ident()
        if any(f.thread == me for f in self._frames):
            raise ProtocolViolation("cannot destroy a sandbox from inside its own invocation")
        with self._lock:
            self.alive = False
            for reg in self._callbacks:
                if reg is not None:
                    reg.active = False
            self._callbacks = [None] * CALLBACK_SLOTS
            try:
                self.backend.close()
            finally:
                self._mapping.close()

    def _mark_dead(self) -> None:
        """Transport failure: no further calls, release what can be released."""
        self.alive = False
        try:
            self.backend.close()
        except Exception:  # already broken
            log.debug("%s: close after transport failure", self.id, exc_info=True)
        self._mapping.close()

    def __enter__(self) -> "Sandbox":
        return self

    def __exit__(self, *exc: object) -> None:
        self.destroy()

    def __repr__(self) -> str:
        state = "alive" if self.alive else "dead"
        return f"Sandbox({self.id}, {self.backend.name}, size={self.size:#x}, {state})"

    # --- heap -------------------------------------------------------------------------

    def malloc(self, what: "int | ScalarKind | RefKind | RecordLayout | type[GuestRecord]", count: int = 1) -> TaintedGuestRef:
        """Allocate in guest memory; returns a reference typed by ``what``."""
        self._check_alive()
        target: ScalarKind | RefKind | RecordLayout | None
        if isinstance(what, int):
            target, nbytes, align = None, what * count, 16
        elif isinstance(what, type) and issubclass(what, GuestRecord):
            target = what.layout()
            nbytes, align = target.size * count, target.align
        elif isinstance(what, (ScalarKind, RefKind, RecordLayout)):
            target, nbytes, align = what, what.size * count, what.align
        else:
            raise TypeError(f"cannot allocate {what!r}")
        with self._lock:
            off = self.backend.malloc(nbytes, align)
        return TaintedGuestRef(self, off, target)

    def new(self, cls: "type[R]") -> "R":
        """Allocate a record and return its typed view."""
        return cls(self.malloc(cls))

    def free(self, ref: "TaintedGuestRef | GuestRecord") -> None:
        self._check_alive()
        r = ref.ref if isinstance(ref, GuestRecord) else ref
        if not isinstance(r, TaintedGuestRef) or r.sandbox is not self:
            raise HostReferenceError("can only free references into this sandbox")
        with self._lock:
            self.backend.free(r._off)

    # --- functions --------------------------------------------------------------------

    def lookup(self, name: str) -> FunctionRef:
        """Resolve an exported guest symbol; fails here, not at call time."""
        self._check_alive()
        ref = self._functions.get(name)
        if ref is None:
            idx, sig = self.backend.resolve(name)
            ref = FunctionRef(name, idx, sig, self.id)
            self._functions[name] = ref
        return ref

    def _marshal(self, kind: Kind, x: object) -> tuple[int, int]:
        if isinstance(kind, ScalarKind):
            if isinstance(x, Tainted):
                return ARG_SCALAR, kind.encode(x._v)
            if isinstance(x, (int, bool)):
                return ARG_SCALAR, kind.encode(x)
            raise HostReferenceError(f"cannot pass {type(x).__name__} as guest {kind.name}")
        if isinstance(kind, RefKind):
            if x is None:
                return ARG_REF, 0
            if isinstance(x, GuestRecord):
                x = x.ref
            if isinstance(x, TaintedGuestRef):
                if x.sandbox is not self:
                    raise self.record_violation(BoundsViolation("guest reference belongs to another sandbox"))
                return ARG_REF, swizzle.to_guest(x.host_address(), self.size, self.base)
            raise HostReferenceError(f"cannot pass {type(x).__name__} where the guest expects a pointer")
        if isinstance(kind, CallbackKind):
            if x is None:
                return ARG_CALLBACK, NO_CALLBACK
            return ARG_CALLBACK, self.callback_slot(x)
        raise HostReferenceError(f"cannot pass a value of kind {kind.name} across the boundary")

    def _wrap(self, kind: Kind | None, raw: int) -> Any:
        if kind is None:
            return _make(0, ILP32.scalar("int"), self.id)
        if isinstance(kind, ScalarKind):
            return Tainted.from_raw(raw, kind, self.id)
        if isinstance(kind, RefKind):
            return TaintedGuestRef(self, raw & 0xFFFFFFFF, kind.target)
        if isinstance(kind, CallbackKind):
            return Tainted.from_raw(raw, ILP32.scalar("u32"), self.id)
        raise TypeError(f"cannot wrap guest value of kind {kind.name}")

    def invoke(self, fn: "FunctionRef | str", *args: GuestArg) -> Tainted[int]:
        """Call into the guest.  The result is tainted; a ``void`` function returns tainted 0."""
        out = self._invoke(fn, args)
        if isinstance(out, TaintedGuestRef):
            raise TaintError("function returns a pointer; use invoke_ref")
        return out  # type: ignore[no-any-return]

    def invoke_ref(self, fn: "FunctionRef | str", *args: GuestArg) -> TaintedGuestRef:
        out = self._invoke(fn, args)
        if not isinstance(out, TaintedGuestRef):
            raise TaintError("function does not return a pointer; use invoke")
        return out

    def _acquire(self) -> None:
        if self.busy == "error":
            if not self._lock.acquire(blocking=False):
                raise SandboxBusy(f"sandbox {self.id} is servicing another thread")
        else:
            self._lock.acquire()

    def _invoke(self, fn: "FunctionRef | str", args: Sequence[object]) -> Any:
        self._check_alive()
        ref = self.lookup(fn) if isinstance(fn, str) else fn
        if ref.sandbox_id != self.id:
            raise ResolutionError(f"{ref.name} was resolved in {ref.sandbox_id}, not {self.id}")
        sig = ref.signature
        if len(args) != len(sig.params):
            raise TypeError(f"{ref.name} takes {len(sig.params)} arguments, got {len(args)}")
        raw_args = [self._marshal(k, a) for k, a in zip(sig.params, args)]
        self._acquire()
        try:
            self._check_alive()
            if len(self._frames) >= MAX_DEPTH:
                raise ProtocolViolation(f"invocation nesting deeper than {MAX_DEPTH}")
            me = threading.get_ident()
            frame = _Frame(me, self._pending.pop(me, {}))
            self._frames.append(frame)
            outermost = len(self._frames) == 1
            try:
                try:
                    raw = self.backend.call(ref.index, raw_args)
                except GuestExit as e:
                    raise _Unwind(_guest_abort(e.code)) from None
                except TransportError:
                    self._mark_dead()
                    raise
            except _Unwind as u:
                if outermost:
                    raise u.exc from u.exc.__cause__
                raise
            finally:
                self._frames.pop()
        finally:
            self._lock.release()
        return self._wrap(sig.ret, raw)

    def nonlocal_exit(self, code: int) -> None:
        """Unwind the innermost in-flight invocation; it surfaces as ``GuestAbort(code)``."""
        if not self._frames:
            raise self.record_violation(ProtocolViolation("non-local exit with no invocation in flight"))
        raise _Unwind(_guest_abort(code & 0xFFFFFFFF))

    @property
    def in_flight(self) -> int:
        return len(self._frames)

    # --- invocation context -----------------------------------------------------------

    def set_invoke_context(self, key: int, value: object) -> None:
        _check_key(key)
        me = threading.get_ident()
        for frame in reversed(self._frames):
            if frame.thread == me:
                frame.context[key] = value
                return
        self._pending.setdefault(me, {})[key] = value

    def get_invoke_context(self, key: int, default: object = None) -> object:
        _check_key(key)
        me = threading.get_ident()
        for frame in reversed(self._frames):
            if frame.thread == me and key in frame.context:
                return frame.context[key]
        return self._pending.get(me, {}).get(key, default)

    # --- callbacks --------------------------------------------------------------------

    @overload
    def register_callback(self, fn: Callable[[], CbRet], params: Sequence[object] = ..., ret: object = ...) -> CallbackRegistration: ...
    @overload
    def register_callback(self, fn: Callable[[CbArg], CbRet], params: Sequence[object] = ..., ret: object = ...) -> CallbackRegistration: ...
    @overload
    def register_callback(
        self, fn: Callable[[CbArg, CbArg2], CbRet], params: Sequence[object] = ..., ret: object = ...
    ) -> CallbackRegistration: ...
    @overload
    def register_callback(
        self, fn: Callable[[CbArg, CbArg2, CbArg3], CbRet], params: Sequence[object] = ..., ret: object = ...
    ) -> CallbackRegistration: ...
    @overload
    def register_callback(
        self, fn: Callable[[CbArg, CbArg2, CbArg3, CbArg4], CbRet], params: Sequence[object] = ..., ret: object = ...
    ) -> CallbackRegistration: ...
    def register_callback(self, fn: Callable[..., CbRet], params: Sequence[object] = (), ret: object = "u32") -> CallbackRegistration:
        """Expose ``fn`` to the guest through a trampoline slot.

        Parameters reach ``fn`` tainted (``Tainted`` for scalars,
        ``TaintedGuestRef`` for pointers).  The guest only ever sees the slot
        index.  Use the registration as a context manager to unregister on
        scope exit.
        """
        self._check_alive()
        if not callable(fn):
            raise TypeError("callback must be callable")
        sig = Signature.parse(ret, params)
        with self._lock:
            for slot, cur in enumerate(self._callbacks):
                if cur is None:
                    reg = CallbackRegistration(self, slot, fn, sig)
                    self._callbacks[slot] = reg
                    return reg
        raise SlotsExhausted(f"all {CALLBACK_SLOTS} callback slots of {self.id} are in use")

    def unregister_callback(self, reg: CallbackRegistration) -> None:
        with self._lock:
            if reg.active and self._callbacks[reg.slot] is reg:
                self._callbacks[reg.slot] = None
            reg.active = False

    def callback_slot(self, reg: object) -> int:
        if not isinstance(reg, CallbackRegistration):
            raise HostReferenceError(f"{type(reg).__name__} is not a registered callback")
        if reg.sandbox is not self:
            raise HostReferenceError("callback is registered with a different sandbox")
        if not reg.active:
            raise ValueError("callback registration is no longer active")
        return reg.slot

    def active_callbacks(self) -> list[CallbackRegistration]:
        return [r for r in self._callbacks if r is not None]

    def dispatch_trampoline(self, slot: int, raw_args: Sequence[int]) -> int:
        """Guest-initiated entry into the host.  Attacker reachable."""
        reg = self._callbacks[slot] if 0 <= slot < CALLBACK_SLOTS else None
        if reg is None or not reg.active:
            raise _Unwind(self.record_violation(CallbackViolation(f"guest called inactive callback slot {slot}")))
        if not self._frames:
            raise _Unwind(self.record_violation(ProtocolViolation("callback outside of an invocation")))
        sig = reg.signature
        if len(raw_args) != len(sig.params):
            raise _Unwind(
                self.record_violation(
                    CallbackViolation(f"slot {slot} takes {len(sig.params)} arguments, guest passed {len(raw_args)}")
                )
            )
        try:
            args = [self._wrap(k, raw) for k, raw in zip(sig.params, raw_args)]
            result = reg.fn(*args)
            if sig.ret is None:
                return 0
            return self._marshal(sig.ret, result)[1]
        except _Unwind:
            raise
        except Exception as exc:
            raise _Unwind(exc) from exc

    # --- sync mode --------------------------------------------------------------------

    @property
    def sync_mode(self) -> Optional[SyncMode]:
        return self.backend.sync_mode

    def set_sync_mode(self, mode: "SyncMode | str") -> None:
        if isinstance(mode, str):
            mode = SyncMode[mode.upper()]
        self.backend.set_sync_mode(mode)

    def pin_worker(self, core: int) -> None:
        self.backend.pin(core)


def _guest_abort(code: int) -> BaseException:
    return GuestAbort(code)


def _check_key(key: int) -> None:
    if not isinstance(key, int) or not 0 <= key < CONTEXT_KEYS:
        raise KeyError(f"context keys are 0..{CONTEXT_KEYS - 1}")


BACKENDS = ("null", "null-indirect", "emusfi", "process")


def make_backend(kind: str, guest: str = "rli", **options: Any) -> Backend:
    libname, variant = parse_guest(guest)
    lib = load_library(libname)
    if kind in ("null", "null-direct"):
        from .backends.null import NullBackend, NullVariant

        return NullBackend(lib, variant, NullVariant.DIRECT)
    if kind == "null-indirect":
        from .backends.null import NullBackend, NullVariant

        return NullBackend(lib, variant, NullVariant.INDIRECT)
    if kind == "emusfi":
        from .backends.emusfi import EmuSfiBackend

        return EmuSfiBackend(lib, variant)
    if kind == "process":
        from .backends.process import ProcessBackend

        return ProcessBackend(lib, variant, guest_spec=f"{libname}:{variant}", **options)
    raise CreationError(f"unknown backend {kind!r}; expected one of {', '.join(BACKENDS)}")


def create_sandbox(
    backend: str = "emusfi",
    size: int | None = None,
    *,
    guest: str = "rli",
    busy: str = "block",
    **options: Any,
) -> Sandbox:
    """Create a sandbox.  ``guest`` is ``"<library>[:<variant>]"``."""
    return Sandbox(make_backend(backend, guest, **options), size, busy=busy)


def destroy_sandbox(s: Sandbox) -> None:
    s.destroy()
