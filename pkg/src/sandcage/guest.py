"""Guest-side programming model.

A guest library is a table of functions written against ``GuestEnv``: they
see only 32-bit offsets and raw scalars, touch memory through the backend's
accessors (``env.mem``), allocate from the guest heap and reach the host only
through trampoline slot numbers (``env.call``) or a host-mediated exit
(``env.exit``).  The same library runs in-process (null, emusfi) or inside a
worker process.
"""

from __future__ import annotations

import importlib
import threading
from dataclasses import dataclass, field
from typing import Any, Callable, NoReturn, Protocol, Sequence

from .errors import ResolutionError
from .machine import ILP32, Kind

ARG_NONE = 0
ARG_SCALAR = 1
ARG_REF = 2
ARG_CALLBACK = 3

FAULT_CODE = 0xFFFFFFFF  # abort code reported when guest code itself crashes


class GuestExit(BaseException):
    """Raised inside guest code to leave through the host-mediated exit path."""

    def __init__(self, code: int) -> None:
        super().__init__(code)
        self.code = code & 0xFFFFFFFF


class HostAbort(BaseException):
    """Raised inside guest code when the host aborts the current invocation."""


class Memory(Protocol):
    size: int

    def load(self, off: int, width: int) -> int: ...
    def store(self, off: int, width: int, value: int) -> None: ...
    def read(self, off: int, n: int) -> bytes: ...
    def write(self, off: int, data: bytes) -> None: ...
    def fill(self, off: int, n: int, byte: int) -> None: ...
    def decode_row(self, src: int, avail: int, dst: int, x: int, width: int) -> tuple[int, int, int, int]: ...


@dataclass(frozen=True)
class Signature:
    ret: Kind | None
    params: tuple[Kind, ...]

    @classmethod
    def parse(cls, ret: object, params: Sequence[object]) -> "Signature":
        kinds = []
        for p in params:
            k = ILP32.parse(p)  # type: ignore[arg-type]
            if k is None:
                raise ValueError("a parameter cannot be void")
            kinds.append(k)
        return cls(ILP32.parse(ret), tuple(kinds))  # type: ignore[arg-type]


@dataclass(frozen=True)
class GuestFunction:
    name: str
    fn: Callable[..., Any]
    signature: Signature
    exported: bool = True


class GuestLibrary:
    """Ordered function table; indices are what crosses the boundary."""

    def __init__(self, name: str) -> None:
        self.name = name
        self._functions: list[GuestFunction] = []
        self._by_name: dict[str, int] = {}

    def export(
        self, ret: object = "u32", params: Sequence[object] = (), *, name: str | None = None, exported: bool = True
    ) -> Callable[[Callable[..., Any]], Callable[..., Any]]:
        def deco(fn: Callable[..., Any]) -> Callable[..., Any]:
            fname = name or fn.__name__
            if fname in self._by_name:
                raise ValueError(f"duplicate guest symbol {fname}")
            self._by_name[fname] = len(self._functions)
            self._functions.append(GuestFunction(fname, fn, Signature.parse(ret, params), exported))
            return fn

        return deco

    def internal(self, ret: object = "u32", params: Sequence[object] = ()) -> Callable[[Callable[..., Any]], Callable[..., Any]]:
        """A symbol that exists in the library but is not in its export table."""
        return self.export(ret, params, exported=False)

    def resolve(self, name: str, *, exported_only: bool = True) -> int:
        idx = self._by_name.get(name)
        if idx is None:
            raise ResolutionError(f"{self.name}: no symbol {name!r}")
        if exported_only and not self._functions[idx].exported:
            raise ResolutionError(f"{self.name}: symbol {name!r} is not exported")
        return idx

    def function(self, index: int) -> GuestFunction:
        if not 0 <= index < len(self._functions):
            raise ResolutionError(f"{self.name}: no function at index {index}")
        return self._functions[index]

    def exports(self) -> list[str]:
        return [f.name for f in self._functions if f.exported]


_LIBRARY_MODULES = {"rli": "sandcage.rli.guest"}
_libraries: dict[str, GuestLibrary] = {}


def register_library(lib: GuestLibrary, module: str | None = None) -> GuestLibrary:
    _libraries[lib.name] = lib
    if module:
        _LIBRARY_MODULES[lib.name] = module
    return lib


def load_library(name: str) -> GuestLibrary:
    lib = _libraries.get(name)
    if lib is None and name in _LIBRARY_MODULES:
        importlib.import_module(_LIBRARY_MODULES[name])
        lib = _libraries.get(name)
    if lib is None:
        raise ResolutionError(f"unknown guest library {name!r}")
    return lib


def parse_guest(spec: str) -> tuple[str, str]:
    """``"rli"`` or ``"rli:m3"`` -> (library, variant)."""
    lib, _, variant = spec.partition(":")
    return lib, variant or "clean"


@dataclass
class GuestEnv:
    """What guest code can touch.  Backends fill in ``call`` and the allocator."""

    mem: Memory
    size: int
    variant: str = "clean"
    state: dict[Any, Any] = field(default_factory=dict)
    threads: list[threading.Thread] = field(default_factory=list)

    def call(self, slot: int, *args: int) -> int:
        raise NotImplementedError

    def malloc(self, nbytes: int, align: int = 16) -> int:
        """Guest ``malloc``: returns 0 when the heap is exhausted."""
        raise NotImplementedError

    def free(self, off: int) -> None:
        raise NotImplementedError

    def exit(self, code: int) -> NoReturn:
        raise GuestExit(code)

    def spawn(self, target: Callable[[], None], name: str = "guest-thread") -> threading.Thread:
        t = threading.Thread(target=target, name=name, daemon=True)
        self.threads.append(t)
        t.start()
        return t

    def join_threads(self, timeout: float = 1.0) -> None:
        for t in self.threads:
            t.join(timeout)
        self.threads = [t for t in self.threads if t.is_alive()]
