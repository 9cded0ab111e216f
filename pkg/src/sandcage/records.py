"""Typed, class-based declarations of guest-resident records.

    class Header(GuestRecord):
        width = Field(0, "u32")
        cursor = FreezableField(4, "u32")
        data = RefField(8, "u8")
        on_done = CallbackField(12)

Declaring the class registers a ``RecordLayout`` (with the usual
registration-time audit).  Instances are views bound to one guest object and
each attribute yields the matching volatile view, so e.g. a freezable field
has no ``read`` and a pointer field only accepts guest references, both of
which the type checker sees.
"""

from __future__ import annotations

from typing import Any, ClassVar, Generic, TypeVar, overload

from .layout import FieldSpec, RecordLayout, registry
from .machine import CALLBACK, ILP32, RefKind, ScalarKind
from .taint import (
    CallbackVolatile,
    FreezableCell,
    RefVolatile,
    RegionOwner,
    TaintedGuestRef,
    TaintedVolatile,
)

VolT = TypeVar("VolT")
RecT = TypeVar("RecT", bound="GuestRecord")


class _Descriptor(Generic[VolT]):
    freezable = False

    def __init__(self, offset: int) -> None:
        self.offset = offset
        self.name = ""

    def __set_name__(self, owner: type, name: str) -> None:
        self.name = name

    def spec(self) -> FieldSpec:
        raise NotImplementedError

    @overload
    def __get__(self, obj: None, owner: type) -> "_Descriptor[VolT]": ...
    @overload
    def __get__(self, obj: "GuestRecord", owner: type) -> VolT: ...
    def __get__(self, obj: "GuestRecord | None", owner: type) -> Any:
        if obj is None:
            return self
        return self._view(obj._sb, obj._off + self.offset)

    def _view(self, sb: RegionOwner, off: int) -> VolT:
        raise NotImplementedError

    def __set__(self, obj: "GuestRecord", value: Any) -> None:
        raise AttributeError(f"use {self.name}.write(...) to store into guest memory")


class Field(_Descriptor[TaintedVolatile]):
    def __init__(self, offset: int, kind: str | ScalarKind) -> None:
        super().__init__(offset)
        parsed = ILP32.parse(kind)
        if not isinstance(parsed, ScalarKind):
            raise TypeError(f"Field needs a scalar kind, got {kind!r}")
        self.kind = parsed

    def spec(self) -> FieldSpec:
        return FieldSpec(self.name, self.offset, self.kind, self.freezable)

    def _view(self, sb: RegionOwner, off: int) -> TaintedVolatile:
        return TaintedVolatile(sb, off, self.kind)


class FreezableField(_Descriptor[FreezableCell]):
    freezable = True

    def __init__(self, offset: int, kind: str | ScalarKind) -> None:
        super().__init__(offset)
        parsed = ILP32.parse(kind)
        if not isinstance(parsed, ScalarKind):
            raise TypeError(f"FreezableField needs a scalar kind, got {kind!r}")
        self.kind = parsed

    def spec(self) -> FieldSpec:
        return FieldSpec(self.name, self.offset, self.kind, True)

    def _view(self, sb: RegionOwner, off: int) -> FreezableCell:
        return FreezableCell(sb, off, self.kind)


class RefField(_Descriptor[RefVolatile]):
    def __init__(self, offset: int, target: str | ScalarKind | RecordLayout | None = None) -> None:
        super().__init__(offset)
        if target is None or isinstance(target, (ScalarKind, RecordLayout)):
            self.target = target
        else:
            inner = ILP32.parse("ref:" + target)
            assert isinstance(inner, RefKind)
            self.target = inner.target  # type: ignore[assignment]

    def spec(self) -> FieldSpec:
        return FieldSpec(self.name, self.offset, RefKind(self.target))

    def _view(self, sb: RegionOwner, off: int) -> RefVolatile:
        return RefVolatile(sb, off, self.target)


class CallbackField(_Descriptor[CallbackVolatile]):
    def spec(self) -> FieldSpec:
        return FieldSpec(self.name, self.offset, CALLBACK)

    def _view(self, sb: RegionOwner, off: int) -> CallbackVolatile:
        return CallbackVolatile(sb, off)


_classes: dict[str, type["GuestRecord"]] = {}


class GuestRecord:
    """Base class for record views; subclasses declare fields as class attributes."""

    __layout__: ClassVar[RecordLayout]
    __slots__ = ("_sb", "_off")

    def __init_subclass__(cls, *, name: str | None = None, size: int | None = None, **kw: Any) -> None:
        super().__init_subclass__(**kw)
        descs = sorted(
            (d for d in vars(cls).values() if isinstance(d, _Descriptor)),
            key=lambda d: d.offset,
        )
        specs = tuple(d.spec() for d in descs)
        if size is None:
            end = max((s.end for s in specs), default=0)
            align = max((s.kind.align for s in specs), default=1)
            size = -(-end // align) * align
        layout = RecordLayout(name or cls.__name__, specs, size)
        cls.__layout__ = registry.register(layout)
        _classes[layout.name] = cls

    def __init__(self, ref: TaintedGuestRef) -> None:
        if not isinstance(ref, TaintedGuestRef):
            raise TypeError("a record view needs a TaintedGuestRef")
        # re-check the span for the whole record, whatever the ref's target was
        checked = ref.cast(self.__layout__)
        self._sb = checked._sb
        self._off = checked._off

    @classmethod
    def layout(cls) -> RecordLayout:
        return cls.__layout__

    @property
    def ref(self) -> TaintedGuestRef:
        return TaintedGuestRef(self._sb, self._off, self.__layout__)

    @property
    def origin(self) -> str:
        return self._sb.id

    def field(self, name: str) -> Any:
        """Untyped access by field name; same views as attribute access."""
        return field(self.ref, name)

    def __repr__(self) -> str:
        return f"{type(self).__name__}<in {self._sb.id}>"


def record_class(layout: RecordLayout) -> type[GuestRecord] | None:
    return _classes.get(layout.name)


def view(ref: TaintedGuestRef, cls: type[RecT]) -> RecT:
    return cls(ref)


def field(ref: TaintedGuestRef, name: str, layout: RecordLayout | str | None = None) -> Any:
    """Volatile view of ``name`` in the record ``ref`` points at.

    ``layout`` defaults to the ref's target; it must be registered.
    """
    target = layout if layout is not None else ref.target
    if isinstance(target, str):
        target = registry.get(target)
    if not isinstance(target, RecordLayout):
        raise TypeError("field access needs a record reference or an explicit layout")
    registry.require(target)
    spec = target.field(name)
    rec = ref.cast(target)
    sb, off = rec._sb, rec._off + spec.offset
    kind = spec.kind
    if isinstance(kind, ScalarKind):
        return FreezableCell(sb, off, kind) if spec.freezable else TaintedVolatile(sb, off, kind)
    if isinstance(kind, RefKind):
        return RefVolatile(sb, off, kind.target)
    if kind is CALLBACK:
        return CallbackVolatile(sb, off)
    cls = _classes.get(kind.name)
    nested = TaintedGuestRef(sb, off, kind)
    return cls(nested) if cls is not None else nested
