"""Taint totality: every public operation on tainted data either returns tainted
data or is one of the named exits.  A new public method without an entry in
``SAMPLES`` fails the audit until someone classifies it."""

from __future__ import annotations

import inspect
import struct
from typing import Any, Callable

import pytest

import sandcage.taint as taint
from sandcage.machine import U8, U32, RefKind, ScalarKind
from sandcage.runtime import CallbackRegistration
from sandcage.taint import (
    CallbackVolatile,
    FreezableCell,
    Frozen,
    RefVolatile,
    Tainted,
    TaintedGuestRef,
    TaintedVolatile,
)
from sandcage.validators import accept_any

EXITS = {
    "verify",
    "copy_and_verify",
    "copy_and_verify_array",
    "copy_and_verify_string",
    "unsafe_unverified",
}
# plain results that are not derived from guest payload
METADATA = {"kind", "origin", "sandbox", "target", "state", "cell"}
# the runtime's resolution path from a checked reference to a host address
RESOLUTION = {"host_address"}

TAINTED_TYPES = (Tainted, TaintedGuestRef, TaintedVolatile, RefVolatile, CallbackVolatile, FreezableCell, Frozen)


def public(cls: type) -> set[str]:
    return {n for n in dir(cls) if not n.startswith("_")}


@pytest.fixture
def objs(sb):
    arr = sb.malloc(U32, 8)
    arr.index(0).write(5)
    ptrs = sb.malloc(RefKind(U32), 2)
    ptrs.index_ref(0).write(arr)
    text = sb.malloc(U8, 8)
    text.write_bytes(b"hi\0")
    reg = sb.register_callback(lambda: 0)
    return {
        "t": taint.tainted(5, "u32", origin=sb.id),
        "ref": arr,
        "ptrs": ptrs,
        "text": text,
        "vol": arr.index(0),
        "refvol": ptrs.index_ref(0),
        "cbvol": CallbackVolatile(sb, ptrs.index_ref(1)._off),
        "cell": arr.index(1).freezable(),
        "frozen": arr.index(2).freezable().freeze(),
        "reg": reg,
    }


SAMPLES: dict[tuple[type, str], Callable[[dict[str, Any]], Any]] = {
    (Tainted, "div_error"): lambda o: o["t"].div_error,
    (Tainted, "raw_bits"): lambda o: o["t"].raw_bits(),
    (Tainted, "from_raw"): lambda o: Tainted.from_raw(5, U32, "x"),
    (TaintedGuestRef, "guest_offset"): lambda o: o["ref"].guest_offset,
    (TaintedGuestRef, "is_null"): lambda o: o["ref"].is_null(),
    (TaintedGuestRef, "same_as"): lambda o: o["ref"].same_as(o["ref"]),
    (TaintedGuestRef, "cast"): lambda o: o["ref"].cast(U8),
    (TaintedGuestRef, "index"): lambda o: o["ref"].index(o["t"] - 4),
    (TaintedGuestRef, "index_ref"): lambda o: o["ptrs"].index_ref(0),
    (TaintedGuestRef, "within"): lambda o: o["ref"].within(o["t"]),
    (TaintedGuestRef, "write_bytes"): lambda o: o["text"].write_bytes(b"ok\0"),
    (TaintedGuestRef, "deref"): lambda o: o["ref"].deref(),
    (TaintedGuestRef, "deref_ref"): lambda o: o["ptrs"].deref_ref(),
    (TaintedVolatile, "read"): lambda o: o["vol"].read(),
    (TaintedVolatile, "write"): lambda o: o["vol"].write(o["t"]),
    (TaintedVolatile, "ref"): lambda o: o["vol"].ref(),
    (TaintedVolatile, "freezable"): lambda o: o["vol"].freezable(),
    (RefVolatile, "read"): lambda o: o["refvol"].read(),
    (RefVolatile, "read_offset"): lambda o: o["refvol"].read_offset(),
    (RefVolatile, "write"): lambda o: o["refvol"].write(o["ref"]),
    (CallbackVolatile, "read"): lambda o: o["cbvol"].read(),
    (CallbackVolatile, "write"): lambda o: o["cbvol"].write(o["reg"]),
    (FreezableCell, "freeze"): lambda o: o["cell"].freeze(),
    (FreezableCell, "unfreeze"): lambda o: o["cell"].unfreeze(),
    (FreezableCell, "write"): lambda o: o["cell"].write(o["t"]),
    (Frozen, "read"): lambda o: o["frozen"].read(),
    (Frozen, "write"): lambda o: o["frozen"].write(3),
    (Frozen, "unfreeze"): lambda o: o["frozen"].unfreeze(),
}

TAINTED_RESULTS = (Tainted, TaintedGuestRef, TaintedVolatile, RefVolatile, CallbackVolatile, FreezableCell, Frozen)


@pytest.mark.parametrize("cls", TAINTED_TYPES, ids=lambda c: c.__name__)
def test_every_public_member_is_classified(cls: type) -> None:
    unclassified = {
        n for n in public(cls) if n not in EXITS | METADATA | RESOLUTION and (cls, n) not in SAMPLES
    }
    assert not unclassified, f"unaudited public members of {cls.__name__}: {sorted(unclassified)}"


@pytest.mark.parametrize("key", list(SAMPLES), ids=lambda k: f"{k[0].__name__}.{k[1]}")
def test_non_exit_results_stay_tainted(objs, key) -> None:
    out = SAMPLES[key](objs)
    assert out is None or isinstance(out, TAINTED_RESULTS), f"{key[1]} returned host-consumable {type(out).__name__}"


def test_metadata_is_not_payload(objs) -> None:
    t = objs["t"]
    assert isinstance(t.kind, ScalarKind) and isinstance(t.origin, str)
    assert objs["ref"].origin == objs["ref"].sandbox.id


def test_exits_are_the_only_plain_outputs(objs) -> None:
    assert objs["t"].verify(accept_any) == 5
    assert objs["ref"].copy_and_verify(accept_any) == 5
    assert objs["ref"].copy_and_verify_array(1, accept_any) == [5]
    assert objs["text"].copy_and_verify_string(8, accept_any) == "hi"
    assert objs["t"].unsafe_unverified("audit") == 5


def test_module_functions_are_classified() -> None:
    fns = {n for n, v in vars(taint).items() if inspect.isfunction(v) and not n.startswith("_") and v.__module__ == taint.__name__}
    plain = {"verify", "unsafe_unverified"}
    tainted_out = {"tainted", "tainted_arith", "tainted_compare", "freeze", "frozen_read", "unfreeze"}
    assert fns == plain | tainted_out


def test_callback_registration_passes_as_index(sb, objs) -> None:
    reg: CallbackRegistration = objs["reg"]
    objs["cbvol"].write(reg)
    raw = struct.unpack_from("<I", sb.view, objs["cbvol"]._off)[0]
    assert raw == reg.slot < 64
