"""Tainted values and guest references.

Everything the host receives from a sandbox arrives wrapped:

* ``Tainted[V]`` holds a scalar copied out of guest memory (or returned by a
  guest call).  Arithmetic and comparisons stay tainted; the payload only
  leaves through ``verify``, the ``copy_and_verify`` family, or
  ``unsafe_unverified``.
* ``TaintedGuestRef`` is a 32-bit guest offset, bounds-checked against its
  sandbox when it is created and again on every access.
* ``TaintedVolatile`` and friends are transient views of one guest-resident
  datum; reading copies into host memory, writing stores into the guest.
* ``FreezableCell`` pins a guest scalar behind a host copy so that later uses
  cannot be raced by the guest.

The runtime side (region, liveness, callback table) is reached through the
small duck-typed surface of ``Sandbox``; this module never imports it.
"""

from __future__ import annotations

import struct
from typing import (
    TYPE_CHECKING,
    Any,
    Callable,
    Generic,
    Optional,
    Protocol,
    TypeVar,
    Union,
    cast,
    overload,
)

from . import audit
from .errors import (
    BoundsViolation,
    FreezeError,
    HostReferenceError,
    ReadWhileUnfrozen,
    TaintError,
    TamperViolation,
    UnterminatedString,
    ValidationError,
    Violation,
)
from .kernels import load_u32
from .layout import RecordLayout
from .machine import BOOL, I32, I64, ILP32, U8, U32, U64, CallbackKind, RefKind, ScalarKind
from .swizzle import to_guest
from .validators import run_check

if TYPE_CHECKING:
    from .runtime import CallbackRegistration

V = TypeVar("V", int, bool)
R = TypeVar("R")

NO_CALLBACK = 0xFFFFFFFF
"""Guest-visible slot value stored for "no callback"."""


class RegionOwner(Protocol):
    """What a guest reference needs from its sandbox."""

    id: str
    size: int

    @property
    def base(self) -> int: ...

    @property
    def view(self) -> memoryview: ...

    def record_violation(self, exc: Violation) -> Violation: ...

    def callback_slot(self, reg: Any) -> int: ...


Target = Union[ScalarKind, RecordLayout, RefKind, CallbackKind, None]


# --- kinds ----------------------------------------------------------------------


def _literal_kind(value: int) -> ScalarKind:
    """C-style type of an integer literal: the first of int, unsigned, long long, unsigned long long."""
    for k in (I32, U32, I64, U64):
        if k.min() <= value <= k.max():
            return k
    from .errors import WidthOverflow

    raise WidthOverflow(f"{value} does not fit any guest integer kind")


def _promote(k: ScalarKind) -> ScalarKind:
    if k.is_bool or k.size < 4:
        return I32
    return k


def _common(a: ScalarKind, b: ScalarKind) -> ScalarKind:
    if a.size != b.size:
        return a if a.size > b.size else b
    if a.signed and b.signed:
        return a
    return a if not a.signed else b


def _as_kind(kind: ScalarKind | str) -> ScalarKind:
    return ILP32.scalar(kind) if isinstance(kind, str) else kind


# --- Tainted ----------------------------------------------------------------------


def _make(value: int | bool, kind: ScalarKind, origin: str, err: bool = False) -> "Tainted[Any]":
    t: Tainted[Any] = object.__new__(Tainted)
    t._v = bool(value) if kind.is_bool else value
    t._kind = kind
    t._origin = origin
    t._err = err
    return t


def _operand(x: object) -> tuple[ScalarKind, int, str | None, bool] | None:
    if isinstance(x, Tainted):
        return _promote(x._kind), int(x._v), x._origin, x._err
    if isinstance(x, int):
        return _literal_kind(int(x)), int(x), None, False
    return None


def _c_div(a: int, b: int) -> tuple[int, int]:
    q = abs(a) // abs(b)
    if (a < 0) != (b < 0):
        q = -q
    return q, a - b * q


_ARITH: dict[str, Callable[[int, int], int]] = {
    "+": lambda a, b: a + b,
    "-": lambda a, b: a - b,
    "*": lambda a, b: a * b,
    "&": lambda a, b: a & b,
    "|": lambda a, b: a | b,
    "^": lambda a, b: a ^ b,
}

_COMPARE: dict[str, Callable[[int, int], bool]] = {
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
    "==": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
}


def _binop(op: str, left: object, right: object) -> Any:
    a = _operand(left)
    b = _operand(right)
    if a is None or b is None:
        return NotImplemented
    ka, va, oa, ea = a
    kb, vb, ob, eb = b
    origin = oa or ob or "host"
    err = ea or eb
    if op in ("<<", ">>"):
        k = ka
        count = kb.wrap(vb) & (k.bits - 1)
        val = va << count if op == "<<" else va >> count
        return _make(k.wrap(val), k, origin, err)
    k = _common(ka, kb)
    va, vb = k.wrap(va), k.wrap(vb)
    if op in _COMPARE:
        return _make(_COMPARE[op](va, vb), BOOL, origin, err)
    if op in ("/", "%"):
        if vb == 0:
            return _make(0, k, origin, True)
        q, r = _c_div(va, vb)
        return _make(k.wrap(q if op == "/" else r), k, origin, err)
    if op in ("&", "|", "^") and isinstance(left, Tainted) and isinstance(right, Tainted):
        if left._kind.is_bool and right._kind.is_bool:
            return _make(_ARITH[op](va, vb), BOOL, origin, err)
    return _make(k.wrap(_ARITH[op](va, vb)), k, origin, err)


class Tainted(Generic[V]):
    """A scalar that came from a sandbox.

    ``kind`` is the guest kind the value was decoded as; when omitted it is
    inferred like a C literal.  Operators follow guest (C, ILP32) integer
    semantics with two's-complement wrap-around.  ``/`` and ``//`` both
    perform truncating integer division; dividing by zero gives ``0`` with
    ``div_error`` set rather than raising.
    """

    __slots__ = ("_v", "_kind", "_origin", "_err")

    _v: V
    _kind: ScalarKind
    _origin: str
    _err: bool

    def __init__(self, value: V, kind: ScalarKind | str | None = None, origin: str = "host") -> None:
        if isinstance(value, Tainted):
            raise TaintError("value is already tainted")
        if not isinstance(value, int):
            raise HostReferenceError(f"only scalars can be tainted, not {type(value).__name__}")
        if kind is None:
            k = BOOL if isinstance(value, bool) else _literal_kind(value)
        else:
            k = _as_kind(kind)
        raw = k.encode(value)
        decoded = k.decode(raw)
        v: Any = bool(decoded) if k.is_bool else decoded
        self._v = v
        self._kind = k
        self._origin = origin
        self._err = False

    @classmethod
    def from_raw(cls, raw: int, kind: ScalarKind, origin: str) -> "Tainted[Any]":
        """Decode raw guest bits (any width, masked to ``kind``)."""
        return _make(kind.decode(raw), kind, origin)

    # metadata is not payload-derived, so it is plain
    @property
    def kind(self) -> ScalarKind:
        return self._kind

    @property
    def origin(self) -> str:
        return self._origin

    @property
    def div_error(self) -> "Tainted[bool]":
        return cast("Tainted[bool]", _make(self._err, BOOL, self._origin))

    def raw_bits(self) -> "Tainted[int]":
        """The guest bit pattern (unsigned) of the payload, still tainted."""
        return cast("Tainted[int]", _make(int(self._v) & self._kind.mask, U64 if self._kind.size == 8 else U32, self._origin))

    # --- the three exits ---

    def verify(self, check: Callable[[V], R]) -> R:
        """Run ``check`` on the payload and return its result; raises ``ValidationError`` on rejection."""
        return cast(R, run_check(check, self._v))

    def unsafe_unverified(self, label: str | None = None) -> V:
        """Strip the taint without checking.  Recorded when auditing is on."""
        audit.record(self._origin, label or audit.call_site())
        return self._v

    # --- forbidden implicit conversions ---

    # hidden from the type checker so that misuse is a static error too
    if not TYPE_CHECKING:

        def __bool__(self):
            raise TaintError("cannot branch on a tainted value; verify it first")

        def __index__(self):
            raise TaintError("a tainted value cannot be used as a host index")

        def __int__(self):
            raise TaintError("a tainted value cannot be converted implicitly; verify it first")

        __float__ = __int__

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        flag = ", div_error" if self._err else ""
        return f"Tainted<{self._kind.name} from {self._origin}{flag}>"

    __str__ = __repr__

    def __reduce__(self) -> Any:
        raise TypeError("tainted values are not serializable")

    # --- arithmetic ---

    def __add__(self, o: "Tainted[Any] | int") -> "Tainted[int]":
        return cast("Tainted[int]", _binop("+", self, o))

    def __radd__(self, o: int) -> "Tainted[int]":
        return cast("Tainted[int]", _binop("+", o, self))

    def __sub__(self, o: "Tainted[Any] | int") -> "Tainted[int]":
        return cast("Tainted[int]", _binop("-", self, o))

    def __rsub__(self, o: int) -> "Tainted[int]":
        return cast("Tainted[int]", _binop("-", o, self))

    def __mul__(self, o: "Tainted[Any] | int") -> "Tainted[int]":
        return cast("Tainted[int]", _binop("*", self, o))

    def __rmul__(self, o: int) -> "Tainted[int]":
        return cast("Tainted[int]", _binop("*", o, self))

    def __floordiv__(self, o: "Tainted[Any] | int") -> "Tainted[int]":
        return cast("Tainted[int]", _binop("/", self, o))

    def __rfloordiv__(self, o: int) -> "Tainted[int]":
        return cast("Tainted[int]", _binop("/", o, self))

    __truediv__ = __floordiv__
    __rtruediv__ = __rfloordiv__

    def __mod__(self, o: "Tainted[Any] | int") -> "Tainted[int]":
        return cast("Tainted[int]", _binop("%", self, o))

    def __rmod__(self, o: int) -> "Tainted[int]":
        return cast("Tainted[int]", _binop("%", o, self))

    def __lshift__(self, o: "Tainted[Any] | int") -> "Tainted[int]":
        return cast("Tainted[int]", _binop("<<", self, o))

    def __rlshift__(self, o: int) -> "Tainted[int]":
        return cast("Tainted[int]", _binop("<<", o, self))

    def __rshift__(self, o: "Tainted[Any] | int") -> "Tainted[int]":
        return cast("Tainted[int]", _binop(">>", self, o))

    def __rrshift__(self, o: int) -> "Tainted[int]":
        return cast("Tainted[int]", _binop(">>", o, self))

    @overload
    def __and__(self: "Tainted[bool]", o: "Tainted[bool]") -> "Tainted[bool]": ...
    @overload
    def __and__(self, o: "Tainted[Any] | int") -> "Tainted[int]": ...
    def __and__(self, o: "Tainted[Any] | int") -> "Tainted[Any]":
        return cast("Tainted[Any]", _binop("&", self, o))

    def __rand__(self, o: int) -> "Tainted[int]":
        return cast("Tainted[int]", _binop("&", o, self))

    @overload
    def __or__(self: "Tainted[bool]", o: "Tainted[bool]") -> "Tainted[bool]": ...
    @overload
    def __or__(self, o: "Tainted[Any] | int") -> "Tainted[int]": ...
    def __or__(self, o: "Tainted[Any] | int") -> "Tainted[Any]":
        return cast("Tainted[Any]", _binop("|", self, o))

    def __ror__(self, o: int) -> "Tainted[int]":
        return cast("Tainted[int]", _binop("|", o, self))

    @overload
    def __xor__(self: "Tainted[bool]", o: "Tainted[bool]") -> "Tainted[bool]": ...
    @overload
    def __xor__(self, o: "Tainted[Any] | int") -> "Tainted[int]": ...
    def __xor__(self, o: "Tainted[Any] | int") -> "Tainted[Any]":
        return cast("Tainted[Any]", _binop("^", self, o))

    def __rxor__(self, o: int) -> "Tainted[int]":
        return cast("Tainted[int]", _binop("^", o, self))

    def __neg__(self) -> "Tainted[int]":
        k = _promote(self._kind)
        return cast("Tainted[int]", _make(k.wrap(-int(self._v)), k, self._origin, self._err))

    def __pos__(self) -> "Tainted[int]":
        k = _promote(self._kind)
        return cast("Tainted[int]", _make(k.wrap(int(self._v)), k, self._origin, self._err))

    def __invert__(self) -> "Tainted[int]":
        k = _promote(self._kind)
        return cast("Tainted[int]", _make(k.wrap(~int(self._v)), k, self._origin, self._err))

    def __abs__(self) -> "Tainted[int]":
        k = _promote(self._kind)
        return cast("Tainted[int]", _make(k.wrap(abs(int(self._v))), k, self._origin, self._err))

    # --- comparisons: results stay tainted ---

    def __lt__(self, o: "Tainted[Any] | int") -> "Tainted[bool]":
        return cast("Tainted[bool]", _binop("<", self, o))

    def __le__(self, o: "Tainted[Any] | int") -> "Tainted[bool]":
        return cast("Tainted[bool]", _binop("<=", self, o))

    def __gt__(self, o: "Tainted[Any] | int") -> "Tainted[bool]":
        return cast("Tainted[bool]", _binop(">", self, o))

    def __ge__(self, o: "Tainted[Any] | int") -> "Tainted[bool]":
        return cast("Tainted[bool]", _binop(">=", self, o))

    def __eq__(self, o: object) -> "Tainted[bool]":  # type: ignore[override]
        return cast("Tainted[bool]", _binop("==", self, o))

    def __ne__(self, o: object) -> "Tainted[bool]":  # type: ignore[override]
        return cast("Tainted[bool]", _binop("!=", self, o))


def tainted(value: V, kind: ScalarKind | str | None = None, origin: str = "host") -> Tainted[V]:
    return Tainted(value, kind, origin)


_OPS = set(_ARITH) | {"/", "%", "<<", ">>"}


def tainted_arith(op: str, a: "Tainted[Any] | int", b: "Tainted[Any] | int") -> Tainted[int]:
    """Functional form of the tainted operators (``op`` is a C operator token)."""
    if op == "//":
        op = "/"
    if op not in _OPS:
        raise ValueError(f"unknown operator {op!r}")
    if not isinstance(a, Tainted) and not isinstance(b, Tainted):
        raise TaintError("tainted_arith needs at least one tainted operand")
    out = _binop(op, a, b)
    if out is NotImplemented:
        raise TypeError(f"unsupported operands for {op}")
    return cast(Tainted[int], out)


def tainted_compare(op: str, a: "Tainted[Any] | int", b: "Tainted[Any] | int") -> Tainted[bool]:
    if op not in _COMPARE:
        raise ValueError(f"unknown comparison {op!r}")
    if not isinstance(a, Tainted) and not isinstance(b, Tainted):
        raise TaintError("tainted_compare needs at least one tainted operand")
    out = _binop(op, a, b)
    if out is NotImplemented:
        raise TypeError(f"unsupported operands for {op}")
    return cast(Tainted[bool], out)


def verify(t: Tainted[V], check: Callable[[V], R]) -> R:
    if not isinstance(t, Tainted):
        raise TaintError(f"verify takes a tainted scalar, not {type(t).__name__}")
    return t.verify(check)


def unsafe_unverified(t: "Tainted[V] | TaintedGuestRef", label: str | None = None) -> Any:
    label = label or audit.call_site()
    return t.unsafe_unverified(label)


# --- guest memory -------------------------------------------------------------------


def _violation(sb: RegionOwner, exc: Violation) -> Violation:
    return sb.record_violation(exc)


def _check_span(sb: RegionOwner, off: int, nbytes: int) -> None:
    if off < 0 or nbytes < 0 or off + nbytes > sb.size:
        raise _violation(
            sb, BoundsViolation(f"guest range {off:#x}+{nbytes:#x} outside sandbox {sb.id} of size {sb.size:#x}")
        )


def _target_size(target: Target) -> int:
    return 1 if target is None else target.size


def _host_int(i: "int | Tainted[Any]") -> int:
    # a tainted index needs no validation beyond the bounds check that follows
    if isinstance(i, Tainted):
        return int(i._v)
    if isinstance(i, bool) or not isinstance(i, int):
        raise TypeError(f"index must be an int or tainted int, not {type(i).__name__}")
    return i


def _load(sb: RegionOwner, off: int, kind: ScalarKind) -> int:
    view = sb.view
    if kind.size == 4:
        return load_u32(sb.base + off)  # type: ignore[no-any-return]
    return int(struct.unpack_from(_UFMT[kind.size], view, off)[0])


def _store(sb: RegionOwner, off: int, kind: ScalarKind, raw: int) -> None:
    struct.pack_into(_UFMT[kind.size], sb.view, off, raw & kind.mask)


_UFMT = {1: "<B", 2: "<H", 4: "<I", 8: "<Q"}


def _encode_scalar(kind: ScalarKind, x: object) -> int:
    if isinstance(x, Tainted):
        # guest data flowing back into guest memory needs no validation, only a fit
        return kind.encode(x._v)
    if isinstance(x, (int, bool)):
        return kind.encode(x)
    raise HostReferenceError(f"cannot store {type(x).__name__} into guest {kind.name}")


class TaintedGuestRef:
    """A bounds-checked 32-bit guest offset with a known target kind."""

    __slots__ = ("_sb", "_off", "_target")

    def __init__(self, sandbox: RegionOwner, offset: int, target: Target = None) -> None:
        _check_span(sandbox, offset, _target_size(target))
        self._sb = sandbox
        self._off = offset
        self._target = target

    @property
    def origin(self) -> str:
        return self._sb.id

    @property
    def sandbox(self) -> RegionOwner:
        return self._sb

    @property
    def target(self) -> Target:
        return self._target

    @property
    def guest_offset(self) -> Tainted[int]:
        return cast(Tainted[int], _make(self._off, U32, self._sb.id))

    def is_null(self) -> Tainted[bool]:
        return cast(Tainted[bool], _make(self._off == 0, BOOL, self._sb.id))

    def same_as(self, other: "TaintedGuestRef") -> Tainted[bool]:
        return cast(Tainted[bool], _make(self._sb is other._sb and self._off == other._off, BOOL, self._sb.id))

    def host_address(self) -> int:
        """Resolution path to a host address; re-checks liveness and bounds."""
        _check_span(self._sb, self._off, _target_size(self._target))
        return self._sb.base + self._off

    @property
    def _elem(self) -> int:
        return _target_size(self._target)

    def _scalar_target(self) -> ScalarKind:
        t = self._target
        if t is None:
            return U8
        if isinstance(t, ScalarKind):
            return t
        raise TypeError(f"reference to {getattr(t, 'name', t)} is not a scalar reference")

    # --- navigation ---

    def cast(self, target: Target) -> "TaintedGuestRef":
        return TaintedGuestRef(self._sb, self._off, target)

    def __add__(self, n: "int | Tainted[Any]") -> "TaintedGuestRef":
        off = self._off + _host_int(n) * self._elem
        return TaintedGuestRef(self._sb, off, self._target)

    def index(self, i: "int | Tainted[Any]") -> "TaintedVolatile":
        kind = self._scalar_target()
        off = self._off + _host_int(i) * kind.size
        _check_span(self._sb, off, kind.size)
        return TaintedVolatile(self._sb, off, kind)

    __getitem__ = index

    def index_ref(self, i: "int | Tainted[Any]") -> "RefVolatile":
        t = self._target
        if not isinstance(t, RefKind):
            raise TypeError("index_ref needs a reference to guest pointers")
        off = self._off + _host_int(i) * t.size
        _check_span(self._sb, off, t.size)
        return RefVolatile(self._sb, off, t.target)

    def within(self, count: "int | Tainted[Any]") -> "TaintedGuestRef":
        """Check that ``count`` elements starting here lie in the region; returns ``self``."""
        n = _host_int(count)
        if n < 0:
            raise _violation(self._sb, BoundsViolation(f"negative element count {n}"))
        _check_span(self._sb, self._off, n * self._elem)
        return self

    def write_bytes(self, data: bytes) -> None:
        """Host-to-guest bulk store (always allowed; bounds-checked)."""
        _check_span(self._sb, self._off, len(data))
        self._sb.view[self._off : self._off + len(data)] = data

    def deref(self) -> "TaintedVolatile":
        return self.index(0)

    def deref_ref(self) -> "RefVolatile":
        return self.index_ref(0)

    # --- copy then check ---

    def _copy(self, nbytes: int) -> bytes:
        _check_span(self._sb, self._off, nbytes)
        return bytes(self._sb.view[self._off : self._off + nbytes])

    def copy_and_verify(self, check: Callable[[int], R]) -> R:
        kind = self._scalar_target()
        snapshot = kind.unpack(self._copy(kind.size))
        return cast(R, run_check(check, snapshot))

    def copy_and_verify_array(self, count: "int | Tainted[Any]", check: Callable[[Any], R]) -> R:
        """Copy ``count`` elements out, then validate them as one unit.

        Byte-sized targets are handed to ``check`` as ``bytes``, wider scalars
        as a list of ints.
        """
        kind = self._scalar_target()
        n = _host_int(count)
        if n < 0:
            raise _violation(self._sb, BoundsViolation(f"negative element count {n}"))
        data = self._copy(n * kind.size)
        if kind.size == 1 and not kind.signed and not kind.is_bool:
            return cast(R, run_check(check, data))
        items = [kind.decode(v) for v in struct.unpack(f"<{n}{_UFMT[kind.size][1]}", data)]
        return cast(R, run_check(check, items))

    def copy_and_verify_string(self, max_len: int, check: Callable[[str], R]) -> R:
        """NUL-terminated string of at most ``max_len`` bytes (terminator included)."""
        if max_len <= 0:
            raise ValueError("max_len must be positive")
        room = self._sb.size - self._off
        data = self._copy(min(max_len, room))
        end = data.find(0)
        if end < 0:
            if max_len > room:
                raise _violation(self._sb, BoundsViolation("string runs off the end of the sandbox region"))
            raise UnterminatedString(f"no terminator within {max_len} bytes")
        try:
            text = data[:end].decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ValidationError(f"guest string is not valid UTF-8: {exc}") from exc
        return cast(R, run_check(check, text))

    def unsafe_unverified(self, label: str | None = None, count: int = 1) -> memoryview:
        """Direct host view of ``count`` target elements, for raw data handoff."""
        nbytes = count * self._elem
        _check_span(self._sb, self._off, nbytes)
        audit.record(self._sb.id, label or audit.call_site())
        return self._sb.view[self._off : self._off + nbytes]

    if not TYPE_CHECKING:

        def __bool__(self):
            raise TaintError("cannot branch on a guest reference; use is_null() and verify it")

    __hash__ = None  # type: ignore[assignment]

    def __eq__(self, o: object) -> Tainted[bool]:  # type: ignore[override]
        if not isinstance(o, TaintedGuestRef):
            return NotImplemented
        return self.same_as(o)

    def __repr__(self) -> str:
        t = self._target
        name = "bytes" if t is None else t.name
        return f"TaintedGuestRef<{name} in {self._sb.id}>"


class _View:
    __slots__ = ("_sb", "_off")

    def __init__(self, sandbox: RegionOwner, offset: int, size: int) -> None:
        _check_span(sandbox, offset, size)
        self._sb = sandbox
        self._off = offset

    @property
    def origin(self) -> str:
        return self._sb.id

    def __repr__(self) -> str:
        return f"{type(self).__name__}<in {self._sb.id}>"

    if not TYPE_CHECKING:

        def __bool__(self):
            raise TaintError("cannot branch on guest memory; read and verify it")


class TaintedVolatile(_View):
    """A guest-resident scalar.  ``read`` copies it out tainted; ``write`` stores into the guest."""

    __slots__ = ("_kind",)

    def __init__(self, sandbox: RegionOwner, offset: int, kind: ScalarKind) -> None:
        super().__init__(sandbox, offset, kind.size)
        self._kind = kind

    @property
    def kind(self) -> ScalarKind:
        return self._kind

    def read(self) -> Tainted[int]:
        _check_span(self._sb, self._off, self._kind.size)
        return cast(Tainted[int], Tainted.from_raw(_load(self._sb, self._off, self._kind), self._kind, self._sb.id))

    def write(self, x: "Tainted[Any] | int") -> None:
        raw = _encode_scalar(self._kind, x)
        _check_span(self._sb, self._off, self._kind.size)
        _store(self._sb, self._off, self._kind, raw)

    def ref(self) -> TaintedGuestRef:
        return TaintedGuestRef(self._sb, self._off, self._kind)

    def freezable(self) -> "FreezableCell":
        return FreezableCell(self._sb, self._off, self._kind)


class RefVolatile(_View):
    """A guest-resident pointer field.  Reading yields a checked ``TaintedGuestRef``."""

    __slots__ = ("_target",)

    def __init__(self, sandbox: RegionOwner, offset: int, target: Target) -> None:
        super().__init__(sandbox, offset, 4)
        self._target = target

    def read_offset(self) -> Tainted[int]:
        _check_span(self._sb, self._off, 4)
        return cast(Tainted[int], Tainted.from_raw(_load(self._sb, self._off, U32), U32, self._sb.id))

    def read(self) -> TaintedGuestRef:
        """The referenced guest object; raises ``BoundsViolation`` for an out-of-region pointer."""
        _check_span(self._sb, self._off, 4)
        return TaintedGuestRef(self._sb, _load(self._sb, self._off, U32), self._target)

    def write(self, x: Optional[TaintedGuestRef]) -> None:
        if x is None:
            raw = 0
        elif isinstance(x, TaintedGuestRef):
            # swizzle: store the low bits of the resolved address, checked against our region
            raw = to_guest(x.host_address(), self._sb.size, self._sb.base)
        else:
            raise HostReferenceError(f"cannot store {type(x).__name__} into a guest pointer field")
        _check_span(self._sb, self._off, 4)
        _store(self._sb, self._off, U32, raw)


class CallbackVolatile(_View):
    """A guest-resident callback field: holds a trampoline slot index, never an address."""

    def __init__(self, sandbox: RegionOwner, offset: int) -> None:
        super().__init__(sandbox, offset, 4)

    def read(self) -> Tainted[int]:
        _check_span(self._sb, self._off, 4)
        return cast(Tainted[int], Tainted.from_raw(_load(self._sb, self._off, U32), U32, self._sb.id))

    def write(self, reg: "CallbackRegistration | None") -> None:
        """Store a ``CallbackRegistration`` (or ``None`` to clear)."""
        raw = NO_CALLBACK if reg is None else self._sb.callback_slot(reg)
        _check_span(self._sb, self._off, 4)
        _store(self._sb, self._off, U32, raw)


# --- freeze ---------------------------------------------------------------------------

UNFROZEN = "UNFROZEN"
FROZEN = "FROZEN"


class FreezableCell(_View):
    """A guest scalar that the host may only read through a frozen copy.

    There is deliberately no ``read`` here: call ``freeze()`` and read the
    returned handle.  Every frozen read re-checks the live guest value and
    raises ``TamperViolation`` on divergence; the value handed back is always
    the frozen copy.
    """

    __slots__ = ("_kind", "_state", "_copy")

    def __init__(self, sandbox: RegionOwner, offset: int, kind: ScalarKind) -> None:
        if not isinstance(kind, ScalarKind) or kind.size > 8:
            raise TypeError("only scalars of at most 8 bytes can be frozen")
        super().__init__(sandbox, offset, kind.size)
        self._kind = kind
        self._state = UNFROZEN
        self._copy: int | None = None

    @property
    def state(self) -> str:
        return self._state

    @property
    def kind(self) -> ScalarKind:
        return self._kind

    def freeze(self) -> "Frozen":
        if self._state == FROZEN:
            raise FreezeError("cell is already frozen")
        _check_span(self._sb, self._off, self._kind.size)
        self._copy = _load(self._sb, self._off, self._kind)
        self._state = FROZEN
        return Frozen(self)

    def unfreeze(self) -> None:
        self._state = UNFROZEN
        self._copy = None

    def write(self, x: "Tainted[Any] | int") -> None:
        raw = _encode_scalar(self._kind, x)
        _check_span(self._sb, self._off, self._kind.size)
        _store(self._sb, self._off, self._kind, raw)
        if self._state == FROZEN:
            self._copy = raw

    def _frozen_read(self) -> Tainted[int]:
        if self._state != FROZEN or self._copy is None:
            raise ReadWhileUnfrozen("freeze the cell before reading it")
        copy = self._copy
        _check_span(self._sb, self._off, self._kind.size)
        live = _load(self._sb, self._off, self._kind)
        if live != copy:
            raise _violation(self._sb, TamperViolation(f"guest modified a frozen {self._kind.name} in {self._sb.id}"))
        return cast(Tainted[int], Tainted.from_raw(copy, self._kind, self._sb.id))


class Frozen:
    """Read handle of a frozen cell."""

    __slots__ = ("_cell",)

    def __init__(self, cell: FreezableCell) -> None:
        self._cell = cell

    @property
    def cell(self) -> FreezableCell:
        return self._cell

    def read(self) -> Tainted[int]:
        return self._cell._frozen_read()

    def write(self, x: "Tainted[Any] | int") -> None:
        self._cell.write(x)

    def unfreeze(self) -> None:
        self._cell.unfreeze()

    def __enter__(self) -> "Frozen":
        return self

    def __exit__(self, *exc: object) -> None:
        self._cell.unfreeze()


def freeze(cell: FreezableCell) -> Frozen:
    return cell.freeze()


def frozen_read(cell: "FreezableCell | Frozen") -> Tainted[int]:
    c = cell.cell if isinstance(cell, Frozen) else cell
    return c._frozen_read()


def unfreeze(cell: "FreezableCell | Frozen") -> None:
    cell.unfreeze()
