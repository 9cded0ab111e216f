"""Backend interface and the shared in-process implementation."""

from __future__ import annotations

import enum
from abc import ABC, abstractmethod
from typing import TYPE_CHECKING, Any, Callable, Sequence

from ..errors import AllocError, InvalidFree
from ..guest import FAULT_CODE, GuestEnv, GuestExit, GuestFunction, GuestLibrary, Memory, Signature
from ..heap import GuestHeap
from ..region import AlignedMapping

if TYPE_CHECKING:
    from ..runtime import Sandbox


class SyncMode(enum.IntEnum):
    SPIN = 0
    EVENT = 1


Dispatch = Callable[[int, Sequence[int]], int]


class Backend(ABC):
    """One isolation mechanism.  A backend instance serves exactly one sandbox."""

    name = "abstract"
    isolating = False

    def __init__(self, library: GuestLibrary, variant: str = "clean") -> None:
        self.library = library
        self.variant = variant
        self.mapping: AlignedMapping | None = None

    @abstractmethod
    def attach(self, sandbox: "Sandbox") -> AlignedMapping:
        """Create the region (and whatever else the guest needs); return the host mapping."""

    def resolve(self, name: str) -> tuple[int, Signature]:
        idx = self.library.resolve(name, exported_only=True)
        return idx, self.library.function(idx).signature

    @abstractmethod
    def call(self, index: int, args: Sequence[tuple[int, int]]) -> int:
        """Run guest function ``index``; ``args`` are (arg kind, raw value) pairs."""

    @abstractmethod
    def malloc(self, nbytes: int, align: int) -> int: ...

    @abstractmethod
    def free(self, off: int) -> None: ...

    @abstractmethod
    def close(self) -> None: ...

    @property
    def sync_mode(self) -> SyncMode | None:
        return None

    def set_sync_mode(self, mode: SyncMode) -> None:
        """Only meaningful for cross-process transports."""

    def pin(self, core: int) -> None:
        raise NotImplementedError(f"{self.name} backend has no separate process to pin")


class InProcessEnv(GuestEnv):
    def __init__(self, mem: Memory, size: int, variant: str, heap: GuestHeap, dispatch: Dispatch) -> None:
        super().__init__(mem, size, variant)
        self._heap = heap
        self._dispatch = dispatch

    def call(self, slot: int, *args: int) -> int:
        return self._dispatch(slot & 0xFFFFFFFF, [a & 0xFFFFFFFFFFFFFFFF for a in args])

    def malloc(self, nbytes: int, align: int = 16) -> int:
        try:
            return self._heap.malloc(nbytes, align)
        except AllocError:
            return 0

    def free(self, off: int) -> None:
        try:
            self._heap.free(off)
        except InvalidFree:
            pass  # a guest-internal bug stays inside the guest


class InProcessBackend(Backend):
    """Guest code runs on the invoking host thread; only the memory accessor differs."""

    def __init__(self, library: GuestLibrary, variant: str = "clean") -> None:
        super().__init__(library, variant)
        self.heap: GuestHeap | None = None
        self.env: InProcessEnv | None = None

    @abstractmethod
    def make_memory(self, mapping: AlignedMapping) -> Memory: ...

    def attach(self, sandbox: "Sandbox") -> AlignedMapping:
        mapping = AlignedMapping(sandbox.size)
        self.mapping = mapping
        self.heap = GuestHeap(sandbox.size)
        self.env = InProcessEnv(self.make_memory(mapping), sandbox.size, self.variant, self.heap, sandbox.dispatch_trampoline)
        return mapping

    def _function(self, index: int) -> GuestFunction:
        return self.library.function(index)

    def call(self, index: int, args: Sequence[tuple[int, int]]) -> int:
        fn = self._function(index)
        assert self.env is not None
        try:
            result: Any = fn.fn(self.env, *[v for _, v in args])
        except Exception as exc:  # a crash in guest code ends the call like an abort
            raise GuestExit(FAULT_CODE) from exc
        return 0 if result is None else int(result)

    def malloc(self, nbytes: int, align: int) -> int:
        assert self.heap is not None
        return self.heap.malloc(nbytes, align)

    def free(self, off: int) -> None:
        assert self.heap is not None
        self.heap.free(off)

    def close(self) -> None:
        if self.env is not None:
            self.env.state["closing"] = True
            self.env.join_threads()
        if self.mapping is not None:
            self.mapping.close()
