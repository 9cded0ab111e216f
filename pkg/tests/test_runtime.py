from __future__ import annotations

import threading
import time

import pytest

from sandcage.errors import (
    BoundsViolation,
    CallbackViolation,
    CreationError,
    GuestAbort,
    HostReferenceError,
    ProtocolViolation,
    ResolutionError,
    SandboxBusy,
    SandboxDead,
    SlotsExhausted,
    TaintError,
    WidthOverflow,
)
from sandcage.machine import U32
from sandcage.runtime import CALLBACK_SLOTS, MAX_DEPTH, create_sandbox, default_region_size
from sandcage.taint import Tainted, TaintedGuestRef, tainted
from sandcage.validators import accept_any

# --- lifecycle ---------------------------------------------------------------------------


def test_create_is_size_aligned(make_sandbox) -> None:
    sb = make_sandbox("emusfi", 1 << 26)
    assert sb.base % (1 << 26) == 0
    assert sb.active_callbacks() == []
    assert bytes(sb.view[:4096]) == bytes(4096)


@pytest.mark.parametrize("size", [3 << 20, 1 << 12, (1 << 20) + 4096, 1 << 33])
def test_bad_region_sizes(size: int) -> None:
    with pytest.raises(CreationError):
        create_sandbox("emusfi", size)


def test_unknown_backend() -> None:
    with pytest.raises(CreationError):
        create_sandbox("wasm", 1 << 20)


def test_many_sequential_creations() -> None:
    sbs = [create_sandbox("emusfi", 1 << 26) for _ in range(64)]
    try:
        assert len({s.base for s in sbs}) == 64
    finally:
        for s in sbs:
            s.destroy()


def test_default_region_size_from_env(monkeypatch) -> None:
    monkeypatch.setenv("SANDCAGE_REGION_SIZE", str(1 << 21))
    assert default_region_size() == 1 << 21
    monkeypatch.delenv("SANDCAGE_REGION_SIZE")
    assert default_region_size() == 1 << 26


def test_destroy_kills_everything(any_sb) -> None:
    ref = any_sb.malloc(U32)
    any_sb.destroy()
    any_sb.destroy()  # idempotent
    with pytest.raises(SandboxDead):
        any_sb.invoke("rli_noop")
    with pytest.raises(SandboxDead):
        ref.deref().read()
    with pytest.raises(SandboxDead):
        any_sb.malloc(8)


def test_context_manager_destroys(make_sandbox) -> None:
    with create_sandbox("emusfi", 1 << 20) as sb:
        assert sb.alive
    assert not sb.alive


# --- invoke --------------------------------------------------------------------------------


def test_invoke_returns_tainted(any_sb) -> None:
    out = any_sb.invoke("echo", 41)
    assert isinstance(out, Tainted)
    assert out.origin == any_sb.id
    assert (out + 1).verify(accept_any) == 42


def test_invoke_accepts_tainted_and_function_ref(any_sb) -> None:
    fn = any_sb.lookup("echo")
    assert fn.sandbox_id == any_sb.id
    assert any_sb.invoke(fn, tainted(9, "u32")).verify(accept_any) == 9


def test_void_returns_tainted_zero(any_sb) -> None:
    info = any_sb.invoke_ref("rli_create", 64)
    assert any_sb.invoke("rli_destroy", info).verify(accept_any) == 0


def test_narrowing_never_truncates(any_sb) -> None:
    with pytest.raises(WidthOverflow):
        any_sb.invoke("echo", 1 << 32)
    with pytest.raises(WidthOverflow):
        any_sb.invoke("echo", -1)


def test_host_objects_never_cross(any_sb) -> None:
    with pytest.raises(HostReferenceError):
        any_sb.invoke("echo", object())
    with pytest.raises(HostReferenceError):
        any_sb.invoke("rli_destroy", 1234)  # a plain int is not a guest reference


def test_foreign_reference_is_refused(any_sb, make_sandbox) -> None:
    other = make_sandbox("emusfi")
    with pytest.raises(BoundsViolation):
        any_sb.invoke("rli_destroy", other.malloc(48))


def test_lookup_fails_at_lookup(any_sb) -> None:
    with pytest.raises(ResolutionError):
        any_sb.lookup("no_such_symbol")


def test_function_ref_is_bound_to_its_sandbox(make_sandbox) -> None:
    a, b = make_sandbox(), make_sandbox()
    with pytest.raises(ResolutionError):
        b.invoke(a.lookup("rli_noop"))


def test_arity_and_return_kind_checks(any_sb) -> None:
    with pytest.raises(TypeError):
        any_sb.invoke("echo")
    with pytest.raises(TaintError):
        any_sb.invoke("rli_create", 64)
    with pytest.raises(TaintError):
        any_sb.invoke_ref("echo", 1)


def test_returned_refs_are_checked(any_sb) -> None:
    ref = any_sb.invoke_ref("rli_create", 64)
    assert isinstance(ref, TaintedGuestRef)
    assert any_sb.base <= ref.host_address() < any_sb.base + any_sb.size
    any_sb.invoke("rli_destroy", ref)


def test_destroy_inside_invocation_is_refused(any_sb) -> None:
    seen = []

    def cb(_: Tainted) -> int:
        with pytest.raises(ProtocolViolation):
            any_sb.destroy()
        seen.append(1)
        return 0

    with any_sb.register_callback(cb, ["u32"]) as reg:
        any_sb.invoke("call_slot", reg.slot, 0)
    assert seen == [1] and any_sb.alive


# --- callbacks ---------------------------------------------------------------------------------


def test_callback_gets_tainted_args_and_slot_index(any_sb) -> None:
    got = []

    def fill(x: Tainted) -> int:
        got.append(x)
        return (x + 1).verify(accept_any)

    reg = any_sb.register_callback(fill, ["u32"], "u32")
    assert reg.slot == 0
    out = any_sb.invoke("call_slot", reg.slot, 10)
    assert out.verify(accept_any) == 11
    assert isinstance(got[0], Tainted) and got[0].origin == any_sb.id
    reg.unregister()


def test_slots_exhaust_at_64(any_sb) -> None:
    regs = [any_sb.register_callback(lambda: 0) for _ in range(CALLBACK_SLOTS)]
    assert sorted(r.slot for r in regs) == list(range(CALLBACK_SLOTS))
    with pytest.raises(SlotsExhausted):
        any_sb.register_callback(lambda: 0)
    regs[5].unregister()
    assert any_sb.register_callback(lambda: 0).slot == 5


def test_scope_exit_deactivates(any_sb) -> None:
    with any_sb.register_callback(lambda x: 1, ["u32"]) as reg:
        slot = reg.slot
    assert not reg.active
    with pytest.raises(CallbackViolation):
        any_sb.invoke("call_slot", slot, 0)
    reg.unregister()  # idempotent


def test_dispatch_of_never_registered_slot(any_sb) -> None:
    with pytest.raises(CallbackViolation):
        any_sb.invoke("call_slot", 7, 0)
    with pytest.raises(CallbackViolation):
        any_sb.invoke("call_slot", 0xFFFFFFFF, 0)
    assert any_sb.violation_counts["CallbackViolation"] == 2
    assert any_sb.invoke("echo", 1).verify(accept_any) == 1


def test_dispatch_with_wrong_arity(any_sb) -> None:
    with any_sb.register_callback(lambda a, b: 0, ["u32", "u32"]) as reg:
        with pytest.raises(CallbackViolation):
            any_sb.invoke("call_slot", reg.slot, 0)


def test_ref_args_arrive_as_checked_refs(any_sb) -> None:
    buf = any_sb.malloc(U32)
    buf.deref().write(99)
    seen = []

    def cb(r: TaintedGuestRef) -> int:
        seen.append(r.cast(U32).copy_and_verify(accept_any))
        return 0

    with any_sb.register_callback(cb, ["ref"]) as reg:
        any_sb.invoke("call_slot", reg.slot, buf.guest_offset.unsafe_unverified())
        with pytest.raises(BoundsViolation):
            any_sb.invoke("call_slot", reg.slot, any_sb.size + 16)
    assert seen == [99]


def test_registration_from_other_sandbox_is_refused(any_sb, make_sandbox) -> None:
    other = make_sandbox()
    reg = other.register_callback(lambda: 0)
    with pytest.raises(HostReferenceError):
        any_sb.callback_slot(reg)
    with pytest.raises(HostReferenceError):
        any_sb.callback_slot(lambda: 0)


def test_host_exception_in_callback_surfaces(any_sb) -> None:
    def boom(_: Tainted) -> int:
        raise KeyError("host side")

    with any_sb.register_callback(boom, ["u32"]) as reg:
        with pytest.raises(KeyError):
            any_sb.invoke("call_slot", reg.slot, 0)
    assert any_sb.invoke("echo", 3).verify(accept_any) == 3


# --- non-local exit -----------------------------------------------------------------------------


def test_guest_exit_code(any_sb) -> None:
    with pytest.raises(GuestAbort) as ei:
        any_sb.invoke("exit_with", 3)
    assert ei.value.code == 3


def test_exit_without_invocation(any_sb) -> None:
    with pytest.raises(ProtocolViolation):
        any_sb.nonlocal_exit(1)


def test_host_initiated_exit_from_callback(any_sb) -> None:
    def error_exit(_: Tainted) -> int:
        any_sb.nonlocal_exit(5)
        return 0

    with any_sb.register_callback(error_exit, ["u32"]) as reg:
        with pytest.raises(GuestAbort) as ei:
            any_sb.invoke("call_slot", reg.slot, 0)
    assert ei.value.code == 5


def test_nested_exit_unwinds_to_outermost(any_sb) -> None:
    order = []

    def cb(_: Tainted) -> int:
        try:
            order.append("callback")
            any_sb.invoke("exit_with", 9)  # inner guest frame exits
            order.append("not reached")
            return 0
        except Exception:
            order.append("swallowed")  # an ordinary handler must not catch the unwind
            return 0
        finally:
            order.append("scope exit")

    with any_sb.register_callback(cb, ["u32"]) as reg:
        with pytest.raises(GuestAbort) as ei:
            any_sb.invoke("call_slot", reg.slot, 0)
    assert ei.value.code == 9
    assert order == ["callback", "scope exit"]
    assert any_sb.in_flight == 0
    assert any_sb.invoke("echo", 4).verify(accept_any) == 4


def test_nesting_depth_limit(any_sb) -> None:
    depth = []

    def recurse(x: Tainted) -> int:
        depth.append(any_sb.in_flight)
        return any_sb.invoke("call_slot", slot[0], x).verify(accept_any)

    slot = [any_sb.register_callback(recurse, ["u32"]).slot]
    with pytest.raises(ProtocolViolation):
        any_sb.invoke("call_slot", slot[0], 0)
    assert max(depth) == MAX_DEPTH
    assert any_sb.in_flight == 0


# --- invocation context ----------------------------------------------------------------------------


def test_context_visible_in_callback_then_cleared(any_sb) -> None:
    seen = []
    marker = object()

    def cb(_: Tainted) -> int:
        seen.append(any_sb.get_invoke_context(3))
        return 0

    any_sb.set_invoke_context(3, marker)
    with any_sb.register_callback(cb, ["u32"]) as reg:
        any_sb.invoke("call_slot", reg.slot, 0)
    assert seen == [marker]
    assert any_sb.get_invoke_context(3) is None


def test_context_keys_are_small(any_sb) -> None:
    with pytest.raises(KeyError):
        any_sb.set_invoke_context(16, 1)
    with pytest.raises(KeyError):
        any_sb.get_invoke_context(-1)


def test_contexts_never_cross_threads(make_sandbox) -> None:
    sbs = [make_sandbox("emusfi"), make_sandbox("emusfi")]
    errors: list[str] = []
    barrier = threading.Barrier(2)

    def run(i: int) -> None:
        sb = sbs[i]

        def cb(x: Tainted) -> int:
            time.sleep(0)
            if sb.get_invoke_context(0) != ("decoder", i):
                errors.append(f"thread {i} saw {sb.get_invoke_context(0)!r}")
            return 0

        with sb.register_callback(cb, ["u32"]) as reg:
            barrier.wait()
            for _ in range(300):
                sb.set_invoke_context(0, ("decoder", i))
                sb.invoke("call_slot", reg.slot, i)

    ts = [threading.Thread(target=run, args=(i,)) for i in range(2)]
    for t in ts:
        t.start()
    for t in ts:
        t.join()
    assert errors == []


def test_context_is_per_thread_on_one_sandbox(sb) -> None:
    sb.set_invoke_context(1, "main")
    out = []
    t = threading.Thread(target=lambda: out.append(sb.get_invoke_context(1)))
    t.start()
    t.join()
    assert out == [None]


# --- single flight ---------------------------------------------------------------------------------


@pytest.mark.parametrize("backend", ["emusfi", "process"])
def test_single_flight_blocks(make_sandbox, backend) -> None:
    sb = make_sandbox(backend)
    spans: list[tuple[float, float]] = []
    lock = threading.Lock()

    def call() -> None:
        t0 = time.monotonic()
        sb.invoke("sleep_ms", 50)
        with lock:
            spans.append((t0, time.monotonic()))

    ts = [threading.Thread(target=call) for _ in range(3)]
    start = time.monotonic()
    for t in ts:
        t.start()
    for t in ts:
        t.join()
    assert time.monotonic() - start >= 0.15  # never interleaved


@pytest.mark.parametrize("backend", ["emusfi", "process"])
def test_single_flight_errors_when_configured(make_sandbox, backend) -> None:
    sb = make_sandbox(backend, busy="error")
    started = threading.Event()

    def cb(_: Tainted) -> int:
        started.set()
        time.sleep(0.2)
        return 0

    reg = sb.register_callback(cb, ["u32"])
    t = threading.Thread(target=lambda: sb.invoke("call_slot", reg.slot, 0))
    t.start()
    assert started.wait(5)
    with pytest.raises(SandboxBusy):
        sb.invoke("rli_noop")
    t.join()
    assert sb.invoke("echo", 2).verify(accept_any) == 2
