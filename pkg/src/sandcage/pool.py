"""Keyed sandbox pooling.

One sandbox instance serves one (library, origin, content type) key at a
time.  Released instances stay idle for reuse; each content class keeps at
most ``threshold`` idle instances and evicts the least recently used beyond
that.  A threshold of 0 means destroy on release.
"""

from __future__ import annotations

import enum
import logging
import threading
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Any, Callable, Iterator

from .backends.base import SyncMode
from .runtime import Sandbox, create_sandbox

log = logging.getLogger(__name__)


class ContentClass(enum.Enum):
    IMAGE = "image"
    DECOMPRESSION = "decompression"
    MEDIA = "media"
    OTHER = "other"


def classify(content_type: str) -> ContentClass:
    major = content_type.split("/", 1)[0].strip().lower()
    if major == "image":
        return ContentClass.IMAGE
    if major == "application":
        return ContentClass.DECOMPRESSION
    if major in ("audio", "video"):
        return ContentClass.MEDIA
    return ContentClass.OTHER


class SyncHint(enum.Enum):
    LATENCY = "latency"
    BULK = "bulk"


_HINT_MODE = {SyncHint.LATENCY: SyncMode.SPIN, SyncHint.BULK: SyncMode.EVENT}


@dataclass(frozen=True)
class SandboxKey:
    library: str
    origin: str
    content_type: str

    @property
    def content_class(self) -> ContentClass:
        return classify(self.content_type)


DEFAULT_THRESHOLDS = {
    ContentClass.IMAGE: 10,
    ContentClass.DECOMPRESSION: 50,
    ContentClass.MEDIA: 0,
}


@dataclass
class PoolConfig:
    thresholds: dict[ContentClass, int] = field(default_factory=lambda: dict(DEFAULT_THRESHOLDS))
    backend: str = "emusfi"
    region_size: int | None = None
    options: dict[str, Any] = field(default_factory=dict)

    def threshold(self, cls: ContentClass) -> int:
        if cls in self.thresholds:
            return self.thresholds[cls]
        return self.thresholds.get(ContentClass.IMAGE, DEFAULT_THRESHOLDS[ContentClass.IMAGE])

    @classmethod
    def parse(cls, text: str) -> "PoolConfig":
        """Flat ``key=value`` lines; ``#`` starts a comment."""
        cfg = cls()
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = (part.strip() for part in line.partition("="))
            if not sep:
                raise ValueError(f"line {lineno}: expected key=value")
            if key.startswith("threshold."):
                name = key[len("threshold.") :]
                try:
                    klass = ContentClass(name)
                except ValueError:
                    raise ValueError(f"line {lineno}: unknown content class {name!r}") from None
                n = int(value, 0)
                if n < 0:
                    raise ValueError(f"line {lineno}: threshold must be >= 0")
                cfg.thresholds[klass] = n
            elif key == "backend":
                cfg.backend = value
            elif key == "region_size":
                cfg.region_size = int(value, 0)
            else:
                raise ValueError(f"line {lineno}: unknown key {key!r}")
        return cfg

    @classmethod
    def load(cls, path: str) -> "PoolConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.parse(fh.read())


class Lease:
    """Exclusive use of one pooled sandbox; release it (or use ``with``)."""

    def __init__(self, pool: "SandboxPool", key: SandboxKey, sandbox: Sandbox) -> None:
        self.pool = pool
        self.key = key
        self.sandbox = sandbox
        self.released = False

    def sync_hint(self, hint: "SyncHint | str") -> None:
        self.pool.sync_hint(self, hint)

    def release(self) -> None:
        self.pool.release(self)

    def __enter__(self) -> "Lease":
        return self

    def __exit__(self, *exc: object) -> None:
        if not self.released:
            self.release()

    def __repr__(self) -> str:
        return f"Lease({self.key}, {self.sandbox.id}{', released' if self.released else ''})"


Factory = Callable[[SandboxKey], Sandbox]


class SandboxPool:
    def __init__(self, config: PoolConfig | None = None, factory: Factory | None = None) -> None:
        self.config = config or PoolConfig()
        self._factory = factory or self._default_factory
        self._lock = threading.Lock()
        # per class: sandbox id -> (key, sandbox), oldest first
        self._idle: dict[ContentClass, OrderedDict[str, tuple[SandboxKey, Sandbox]]] = {c: OrderedDict() for c in ContentClass}
        self._leased: dict[str, Lease] = {}
        self.created = 0
        self.destroyed = 0
        self.reused = 0
        self._closed = False

    def _default_factory(self, key: SandboxKey) -> Sandbox:
        return create_sandbox(self.config.backend, self.config.region_size, guest=key.library, **self.config.options)

    # --- leasing ---

    def acquire(self, key: SandboxKey) -> Lease:
        with self._lock:
            if self._closed:
                raise RuntimeError("pool is closed")
            idle = self._idle[key.content_class]
            # most recently used instance for this key first
            for sid in reversed(idle):
                k, sb = idle[sid]
                if k == key:
                    del idle[sid]
                    if not sb.alive:
                        continue
                    lease = Lease(self, key, sb)
                    self._leased[sb.id] = lease
                    self.reused += 1
                    return lease
        sb = self._factory(key)
        with self._lock:
            lease = Lease(self, key, sb)
            self._leased[sb.id] = lease
            self.created += 1
        return lease

    def release(self, lease: Lease) -> None:
        doomed: list[Sandbox] = []
        with self._lock:
            if lease.released or self._leased.get(lease.sandbox.id) is not lease:
                raise ValueError(f"{lease!r} is not an outstanding lease of this pool")
            lease.released = True
            del self._leased[lease.sandbox.id]
            sb = lease.sandbox
            cls = lease.key.content_class
            limit = self.config.threshold(cls)
            if self._closed or not sb.alive or limit == 0:
                doomed.append(sb)
            else:
                idle = self._idle[cls]
                idle[sb.id] = (lease.key, sb)
                while len(idle) > limit:
                    _, (_, old) = idle.popitem(last=False)
                    doomed.append(old)
        for sb in doomed:
            self._destroy(sb)

    def lease(self, key: SandboxKey) -> Lease:
        """``with pool.lease(key) as l: l.sandbox.invoke(...)``"""
        return self.acquire(key)

    def _destroy(self, sb: Sandbox) -> None:
        try:
            sb.destroy()
        except Exception:
            log.warning("destroying %s failed", sb.id, exc_info=True)
        with self._lock:
            self.destroyed += 1

    # --- policy ---

    def sync_hint(self, lease: Lease, hint: "SyncHint | str") -> None:
        """LATENCY -> SPIN, BULK -> EVENT on cross-process backends; no-op elsewhere."""
        h = hint if isinstance(hint, SyncHint) else SyncHint(str(hint).lower())
        if lease.released:
            raise ValueError("lease already released")
        if lease.sandbox.sync_mode is not None:
            lease.sandbox.set_sync_mode(_HINT_MODE[h])

    # --- introspection ---

    def live_count(self) -> int:
        with self._lock:
            return sum(len(d) for d in self._idle.values()) + len(self._leased)

    def idle_count(self, cls: ContentClass | None = None) -> int:
        with self._lock:
            if cls is not None:
                return len(self._idle[cls])
            return sum(len(d) for d in self._idle.values())

    def outstanding(self) -> int:
        with self._lock:
            return len(self._leased)

    def idle_sandboxes(self) -> Iterator[tuple[SandboxKey, Sandbox]]:
        with self._lock:
            items = [v for d in self._idle.values() for v in d.values()]
        return iter(items)

    def close(self) -> None:
        """Destroy idle instances; outstanding leases are destroyed on release."""
        with self._lock:
            self._closed = True
            doomed = [sb for d in self._idle.values() for _, sb in d.values()]
            for d in self._idle.values():
                d.clear()
        for sb in doomed:
            self._destroy(sb)

    def __enter__(self) -> "SandboxPool":
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()
