"""Guest machine model (ILP32, little endian) and scalar translation.

Every value crossing the boundary is described by a kind.  Host to guest
narrowing is strict: a value that does not fit raises ``WidthOverflow``.
Guest to host widening is total: the guest can only ever produce ``size``
bytes, so decoding masks and sign-extends.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Union

from .errors import WidthOverflow

if TYPE_CHECKING:
    from .layout import RecordLayout

_FORMATS = {1: "B", 2: "H", 4: "I", 8: "Q"}


@dataclass(frozen=True)
class ScalarKind:
    name: str
    size: int
    signed: bool = False
    is_bool: bool = False

    @property
    def align(self) -> int:
        return self.size

    @property
    def bits(self) -> int:
        return self.size * 8

    @property
    def mask(self) -> int:
        return (1 << self.bits) - 1

    @property
    def fmt(self) -> str:
        f = _FORMATS[self.size]
        return "<" + (f.lower() if self.signed else f)

    def min(self) -> int:
        return -(1 << (self.bits - 1)) if self.signed else 0

    def max(self) -> int:
        return (1 << (self.bits - 1)) - 1 if self.signed else self.mask

    def encode(self, value: int | bool) -> int:
        """Narrow a host value to the raw unsigned guest bit pattern."""
        if self.is_bool:
            if value not in (0, 1):
                raise WidthOverflow(f"{value!r} is not a guest bool")
            return int(value)
        v = int(value)
        if not self.min() <= v <= self.max():
            raise WidthOverflow(f"{v} does not fit guest {self.name} ({self.bits} bits)")
        return v & self.mask

    def decode(self, raw: int) -> int:
        """Interpret raw guest bits (any width) as a host value of this kind."""
        raw &= self.mask
        if self.is_bool:
            return int(raw != 0)
        if self.signed and raw >> (self.bits - 1):
            return raw - (1 << self.bits)
        return raw

    def wrap(self, value: int) -> int:
        """Two's-complement wrap of an arbitrary host int to this width."""
        return self.decode(value & self.mask)

    def pack(self, value: int) -> bytes:
        return struct.pack(self.fmt, self.decode(self.encode(value)))

    def unpack(self, data: bytes) -> int:
        return self.decode(int.from_bytes(data[: self.size], "little"))

    def __repr__(self) -> str:
        return f"<kind {self.name}>"


U8 = ScalarKind("u8", 1)
I8 = ScalarKind("i8", 1, signed=True)
U16 = ScalarKind("u16", 2)
I16 = ScalarKind("i16", 2, signed=True)
U32 = ScalarKind("u32", 4)
I32 = ScalarKind("i32", 4, signed=True)
U64 = ScalarKind("u64", 8)
I64 = ScalarKind("i64", 8, signed=True)
BOOL = ScalarKind("bool", 1, is_bool=True)


@dataclass(frozen=True)
class RefKind:
    """A 32-bit guest pointer to ``target`` (``None`` means raw bytes)."""

    target: Union[ScalarKind, "RecordLayout", "RefKind", None] = None
    size: int = 4

    @property
    def align(self) -> int:
        return self.size

    @property
    def target_size(self) -> int:
        t = self.target
        return 1 if t is None else t.size

    @property
    def name(self) -> str:
        t = self.target
        return "ref" if t is None else f"ref:{t.name}"


@dataclass(frozen=True)
class CallbackKind:
    """A trampoline index as seen by the guest."""

    size: int = 4
    name: str = "cb"

    @property
    def align(self) -> int:
        return self.size


CALLBACK = CallbackKind()
BYTES_REF = RefKind(None)

Kind = Union[ScalarKind, RefKind, CallbackKind, "RecordLayout"]


@dataclass(frozen=True)
class MachineModel:
    int_size: int = 4
    long_size: int = 4
    address_size: int = 4
    endianness: str = "little"
    host_address_size: int = 8
    aliases: dict[str, ScalarKind] = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self) -> None:
        if self.endianness != "little":
            raise ValueError("only little-endian guests are modelled")
        base = {k.name: k for k in (U8, I8, U16, I16, U32, I32, U64, I64, BOOL)}
        ints = {4: (I32, U32), 8: (I64, U64)}
        base["int"], base["uint"] = ints[self.int_size]
        base["long"], base["ulong"] = ints[self.long_size]
        base["size_t"] = ints[self.address_size][1]
        self.aliases.update(base)

    def scalar(self, name: str) -> ScalarKind:
        try:
            return self.aliases[name]
        except KeyError:
            raise ValueError(f"unknown scalar kind {name!r}") from None

    def parse(self, spec: "str | Kind | None") -> "Kind | None":
        """Turn a signature entry such as ``"u32"``, ``"ref"`` or ``"cb"`` into a kind."""
        if spec is None or spec == "void":
            return None
        if not isinstance(spec, str):
            return spec
        if spec == "cb":
            return CALLBACK
        if spec == "ref":
            return BYTES_REF
        if spec.startswith("ref:"):
            inner = spec[4:]
            if inner in self.aliases:
                return RefKind(self.aliases[inner])
            from .layout import registry

            return RefKind(registry.get(inner))
        return self.scalar(spec)


ILP32 = MachineModel()
