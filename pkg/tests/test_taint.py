from __future__ import annotations

import ctypes
import pickle
from fractions import Fraction
from math import trunc

import pytest
from hypothesis import given
from hypothesis import strategies as st

from sandcage import audit
from sandcage.errors import TaintError, ValidationError, WidthOverflow
from sandcage.machine import BOOL, I8, I16, I32, I64, ILP32, U8, U16, U32, U64
from sandcage.rli.abi import HEADER_OK
from sandcage.taint import Tainted, tainted, tainted_arith, tainted_compare, unsafe_unverified, verify
from sandcage.validators import accept_any, in_range, one_of, predicate

KINDS = (U8, I8, U16, I16, U32, I32, U64, I64)
CTYPE = {
    U8: ctypes.c_uint8,
    I8: ctypes.c_int8,
    U16: ctypes.c_uint16,
    I16: ctypes.c_int16,
    U32: ctypes.c_uint32,
    I32: ctypes.c_int32,
    U64: ctypes.c_uint64,
    I64: ctypes.c_int64,
}


def value(t: Tainted) -> object:
    return t.unsafe_unverified("test")


# --- verify -------------------------------------------------------------------------


def test_verify_accepts_allowed_value() -> None:
    assert verify(tainted(1), one_of({0, 1, 2})) == 1


def test_verify_rejects_disallowed_value() -> None:
    with pytest.raises(ValidationError):
        verify(tainted(7), one_of({0, 1, 2}))


def test_verify_header_status() -> None:
    # the header-ok status check of the streaming decoder interface
    assert HEADER_OK == 2
    assert verify(tainted(HEADER_OK), lambda v: v if v == HEADER_OK else None) == 2


def test_verify_may_project() -> None:
    assert tainted(5).verify(lambda v: str(v * 2)) == "10"


def test_crashing_validator_is_a_rejection() -> None:
    with pytest.raises(ValidationError):
        tainted(0).verify(lambda v: 1 // v)


def test_verify_needs_tainted_input() -> None:
    with pytest.raises(TaintError):
        verify(3, accept_any)  # type: ignore[arg-type]


def test_validator_helpers() -> None:
    assert tainted(5).verify(in_range(0, 5)) == 5
    with pytest.raises(ValidationError):
        tainted(6).verify(in_range(0, 5))
    assert tainted(4).verify(predicate(lambda v: v % 2 == 0)) == 4
    with pytest.raises(ValidationError, match="odd"):
        tainted(3).verify(predicate(lambda v: v % 2 == 0, "odd"))


# --- unsafe escape and audit ----------------------------------------------------------


def test_unsafe_unverified_returns_payload() -> None:
    assert unsafe_unverified(tainted(5)) == 5


def test_audit_records_each_escape(audit_lines: list[str]) -> None:
    t = tainted(5, origin="sb-x")
    unsafe_unverified(t, "site-a")
    t.unsafe_unverified("site-b")
    assert audit_lines == ["UNSAFE sb-x site-a", "UNSAFE sb-x site-b"]
    assert audit.count == 2


def test_audit_off_by_default() -> None:
    audit.reset()
    unsafe_unverified(tainted(1))
    assert audit.count == 0


def test_unsafe_alias_pattern_keeps_functionality() -> None:
    # migration step: the host keeps using the raw value through an explicit alias
    width = unsafe_unverified(tainted(7) * 3)
    assert list(range(width)) == list(range(21))


# --- arithmetic -----------------------------------------------------------------------


def test_add_literal() -> None:
    assert value(tainted(2) + 3) == 5


def test_wraps_at_guest_width() -> None:
    out = tainted(0xFFFFFFFF) + 1
    assert value(out) == 0
    assert out.kind == U32


def test_multiply_tainted() -> None:
    assert value(tainted(4) * tainted(5)) == 20


def test_results_stay_tainted_and_keep_origin() -> None:
    t = tainted(9, "u32", origin="sb-7")
    for out in (t + 1, 1 + t, t - 1, t * 2, t // 2, t / 2, t % 4, t << 1, t >> 1, t & 3, t | 4, t ^ 1, -t, ~t, abs(t), +t):
        assert isinstance(out, Tainted)
        assert out.origin == "sb-7"


def test_division_by_zero_gives_flagged_sentinel() -> None:
    out = tainted(7) // 0
    assert value(out) == 0
    assert value(out.div_error) is True
    assert value((tainted(7) // 2).div_error) is False
    # the flag follows the value through further arithmetic
    assert value((out + 1).div_error) is True


@pytest.mark.parametrize(
    "a,b,q,r",
    [(7, 2, 3, 1), (-7, 2, -3, -1), (7, -2, -3, 1), (-7, -2, 3, -1)],
)
def test_division_truncates_toward_zero(a: int, b: int, q: int, r: int) -> None:
    assert value(tainted(a) / b) == q
    assert value(tainted(a) % b) == r


def test_mixed_signedness_follows_c_conversions() -> None:
    # int -1 compared with unsigned 1: -1 converts to UINT_MAX
    assert value(tainted(-1, "i32") < tainted(1, "u32")) is False
    assert value(tainted(-1, "i32") < 1) is True
    # sub-int operands promote to int
    assert value(tainted(200, "u8") + tainted(100, "u8")) == 300
    assert (tainted(200, "u8") + tainted(100, "u8")).kind == I32


def test_shift_count_is_masked_to_width() -> None:
    assert value(tainted(1, "u32") << 33) == 2


def test_bool_logic_stays_bool() -> None:
    t, f = tainted(True), tainted(False)
    assert (t & f).kind == BOOL
    assert value(t | f) is True


_ops = st.sampled_from(["+", "-", "*", "&", "|", "^"])


@given(st.sampled_from([I32, U32, I64, U64]), st.data(), _ops)
def test_arith_matches_c_oracle(kind, data, op) -> None:
    a = data.draw(st.integers(kind.min(), kind.max()))
    b = data.draw(st.integers(kind.min(), kind.max()))
    ct = CTYPE[kind]
    want = ct(eval(f"a {op} b")).value  # the ctypes constructor wraps like the guest
    assert value(tainted_arith(op, tainted(a, kind), tainted(b, kind))) == want


@given(st.integers(-(2**31), 2**31 - 1), st.integers(-(2**31), 2**31 - 1).filter(bool))
def test_division_matches_c_oracle(a: int, b: int) -> None:
    q = ctypes.c_int32(trunc(Fraction(a, b))).value
    r = ctypes.c_int32(a - b * trunc(Fraction(a, b))).value
    assert value(tainted_arith("/", tainted(a, I32), b)) == q
    assert value(tainted_arith("%", tainted(a, I32), b)) == r


def test_functional_forms() -> None:
    assert value(tainted_arith("//", tainted(9), 2)) == 4
    assert value(tainted_compare("<", tainted(3), 5)) is True
    with pytest.raises(ValueError):
        tainted_arith("**", tainted(2), 2)
    with pytest.raises(ValueError):
        tainted_compare("<>", tainted(2), 2)
    with pytest.raises(TaintError):
        tainted_arith("+", 1, 2)
    with pytest.raises(TaintError):
        tainted_compare("<", 1, 2)


# --- comparisons and implicit conversions ---------------------------------------------------


def test_comparison_is_tainted_bool() -> None:
    out = tainted(3) < 5
    assert isinstance(out, Tainted)
    assert out.kind == BOOL
    assert verify(out, accept_any) is True


def test_cannot_branch_on_tainted() -> None:
    with pytest.raises(TaintError):
        if tainted(3) < 5:
            pass


@pytest.mark.parametrize("convert", [bool, int, float, hash, lambda t: [0, 1][t], lambda t: range(t)])
def test_implicit_conversions_are_refused(convert) -> None:
    with pytest.raises(TypeError):
        convert(tainted(1))


def test_not_serializable() -> None:
    with pytest.raises(TypeError):
        pickle.dumps(tainted(1))


def test_only_scalars_are_tainted() -> None:
    with pytest.raises(TaintError):
        tainted(tainted(1))
    with pytest.raises(TaintError):
        tainted("text")  # type: ignore[arg-type]


def test_narrowing_is_checked() -> None:
    with pytest.raises(WidthOverflow):
        tainted(256, "u8")
    with pytest.raises(WidthOverflow):
        tainted(-1, "u32")


def test_repr_hides_payload() -> None:
    assert "1234" not in repr(tainted(1234, origin="sb-1"))


# --- layout transparency --------------------------------------------------------------------


@given(st.sampled_from(KINDS), st.integers(0, 2**64 - 1))
def test_wrap_unwrap_is_bitwise_identity(kind, raw) -> None:
    bits = raw & kind.mask
    t = Tainted.from_raw(bits, kind, "sb-t")
    assert value(t.raw_bits()) == bits
    assert kind.encode(value(t)) == bits
    assert CTYPE[kind](value(t)).value == CTYPE[kind](bits).value


@given(st.sampled_from(KINDS), st.data())
def test_construct_then_unwrap_is_identity(kind, data) -> None:
    v = data.draw(st.integers(kind.min(), kind.max()))
    assert value(tainted(v, kind)) == v


def test_machine_model_widths() -> None:
    assert ILP32.scalar("int").size == 4
    assert ILP32.scalar("long").size == 4
    assert ILP32.scalar("size_t") == U32
    assert ILP32.address_size == 4
    with pytest.raises(ValueError):
        ILP32.scalar("float")
