"""Explicit record layouts for guest-resident structs.

Python has no struct reflection either, so records shared with the guest are
described once, registered, and audited at registration time.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

from .errors import UnknownField, UnknownRecord
from .machine import ILP32, CallbackKind, MachineModel, RefKind, ScalarKind

FieldKind = Union[ScalarKind, RefKind, CallbackKind, "RecordLayout"]


@dataclass(frozen=True)
class FieldSpec:
    name: str
    offset: int
    kind: FieldKind
    freezable: bool = False

    @property
    def end(self) -> int:
        return self.offset + self.kind.size


@dataclass(frozen=True)
class RecordLayout:
    name: str
    fields: tuple[FieldSpec, ...]
    size: int

    @property
    def align(self) -> int:
        return max((f.kind.align for f in self.fields), default=1)

    def field(self, name: str) -> FieldSpec:
        for f in self.fields:
            if f.name == name:
                return f
        raise UnknownField(f"record {self.name} has no field {name!r}")

    def check(self) -> None:
        """Self-audit: increasing offsets, aligned, non-overlapping, inside ``size``."""
        prev_end = 0
        prev_off = -1
        for f in self.fields:
            if f.offset <= prev_off:
                raise ValueError(f"{self.name}.{f.name}: offsets must strictly increase")
            if f.offset < prev_end:
                raise ValueError(f"{self.name}.{f.name}: overlaps previous field")
            if f.offset % f.kind.align:
                raise ValueError(f"{self.name}.{f.name}: misaligned for {f.kind.name}")
            if f.end > self.size:
                raise ValueError(f"{self.name}.{f.name}: exceeds record size {self.size}")
            if f.freezable and not isinstance(f.kind, ScalarKind):
                raise ValueError(f"{self.name}.{f.name}: only scalar fields can be freezable")
            prev_off, prev_end = f.offset, f.end
        if self.size % self.align:
            raise ValueError(f"{self.name}: size {self.size} not a multiple of alignment")


class LayoutRegistry:
    def __init__(self) -> None:
        self._by_name: dict[str, RecordLayout] = {}
        self._lock = threading.Lock()

    def register(self, layout: RecordLayout) -> RecordLayout:
        layout.check()
        with self._lock:
            existing = self._by_name.get(layout.name)
            if existing is not None and existing != layout:
                raise ValueError(f"record {layout.name} already registered with a different layout")
            self._by_name[layout.name] = layout
        return layout

    def get(self, name: str) -> RecordLayout:
        try:
            return self._by_name[name]
        except KeyError:
            raise UnknownRecord(f"record {name!r} is not registered") from None

    def require(self, layout: RecordLayout) -> RecordLayout:
        if self._by_name.get(layout.name) != layout:
            raise UnknownRecord(f"record {layout.name!r} is not registered")
        return layout

    def __contains__(self, name: object) -> bool:
        return name in self._by_name


registry = LayoutRegistry()


def record(
    name: str,
    fields: Iterable[Sequence[object]],
    size: int | None = None,
    *,
    model: MachineModel = ILP32,
    register: bool = True,
) -> RecordLayout:
    """Build (and by default register) a record layout.

    Each field entry is ``(name, offset, kind)`` or ``(name, offset, kind, freezable)``;
    ``kind`` may be a kind object or a signature string such as ``"u32"``.
    ``size`` defaults to the last field's end rounded up to the record alignment.
    """
    specs = []
    for entry in fields:
        fname, off, kspec, *rest = entry
        kind = model.parse(kspec)  # type: ignore[arg-type]
        if kind is None:
            raise ValueError(f"field {fname!r} cannot be void")
        specs.append(FieldSpec(str(fname), int(off), kind, bool(rest[0]) if rest else False))  # type: ignore[call-overload]
    if size is None:
        end = max((s.end for s in specs), default=0)
        align = max((s.kind.align for s in specs), default=1)
        size = -(-end // align) * align
    layout = RecordLayout(name, tuple(specs), size)
    if register:
        return registry.register(layout)
    layout.check()
    return layout
