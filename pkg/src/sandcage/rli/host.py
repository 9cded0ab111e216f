"""Host-side consumer of the sandboxed RLI decoder.

This is the fully migrated port: every value read back from the guest is
tainted and is either validated or only used to address guest memory.
Two validation styles are used:

* library invariant: the frozen ``output_scanline`` must stay within
  ``1..height`` (freezing means the guest cannot change it between the check
  and the use);
* application invariant: the destination row must lie inside the host pixel
  buffer, which is additionally guarded by canary bytes.
"""

from __future__ import annotations

import secrets
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable, Optional

from ..errors import DecodeError, GuestAbort, ValidationError
from ..taint import Tainted, TaintedGuestRef
from ..validators import in_range, one_of, reject
from .abi import HEADER_OK, ROW_OK
from .info import RliInfo

if TYPE_CHECKING:
    from ..pool import SandboxPool
    from ..runtime import Sandbox

DECODER_KEY = 0
CANARY = b"\xa5\x5a" * 16
MAX_DIM = 1 << 14
MAX_PIXELS = 1 << 24
DEFAULT_CAPACITY = 4096


@dataclass
class _Stream:
    """Host-side input state for one decode, reached from callbacks via the invoke context."""

    data: bytes
    chunk: int
    pos: int = 0
    info: Optional[RliInfo] = None
    capacity: int = 0
    buffer: Optional[TaintedGuestRef] = None
    fills: int = 0
    token: int = field(default_factory=lambda: secrets.randbits(32))

    def next_chunk(self, room: int) -> bytes:
        n = min(room, self.chunk, len(self.data) - self.pos)
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out


def _stream(sb: "Sandbox") -> _Stream:
    dec = sb.get_invoke_context(DECODER_KEY)
    if not isinstance(dec, _Stream):
        raise ValidationError("callback arrived outside of a decode")
    return dec


def _check_info(dec: _Stream, info_ref: TaintedGuestRef) -> RliInfo:
    # the guest passes the record pointer back to us; only accept our own
    assert dec.info is not None
    if not info_ref.same_as(dec.info.ref).verify(bool):
        raise ValidationError("callback received a foreign info record")
    return dec.info


def make_fill(sb: "Sandbox") -> Callable[[TaintedGuestRef], int]:
    def fill_input_buffer(info_ref: TaintedGuestRef) -> int:
        dec = _stream(sb)
        info = _check_info(dec, info_ref)
        assert dec.buffer is not None
        cap = dec.capacity
        left = info.bytes_in_buffer.read().verify(in_range(0, cap))
        src = info.next_input_offset.read()  # out-of-region pointers fail here
        leftover: bytes = src.copy_and_verify_array(left, bytes)
        chunk = dec.next_chunk(cap - left)
        dec.buffer.write_bytes(leftover + chunk)
        info.next_input_offset.write(dec.buffer)
        info.bytes_in_buffer.write(len(leftover) + len(chunk))
        dec.fills += 1
        return 1 if chunk else 0

    return fill_input_buffer


def make_skip(sb: "Sandbox") -> Callable[[TaintedGuestRef, Tainted[int]], None]:
    def skip_input_data(info_ref: TaintedGuestRef, num_bytes: Tainted[int]) -> None:
        dec = _stream(sb)
        info = _check_info(dec, info_ref)
        assert dec.buffer is not None
        have = info.bytes_in_buffer.read().verify(in_range(0, dec.capacity))
        n = num_bytes.verify(in_range(0, have + len(dec.data) - dec.pos))
        if n > have:
            dec.pos += n - have
            info.bytes_in_buffer.write(0)
            info.next_input_offset.write(dec.buffer)
        else:
            src = info.next_input_offset.read().within(have)
            info.next_input_offset.write(src + n)
            info.bytes_in_buffer.write(have - n)

    return skip_input_data


def _row_check(width: int) -> "object":
    def check(row: bytes) -> bytes:
        if len(row) != width:
            reject("short row")
        return row

    return check


def decode_with(
    sb: "Sandbox",
    data: bytes,
    *,
    chunk: int = DEFAULT_CAPACITY,
    capacity: int = DEFAULT_CAPACITY,
    unsafe_rows: bool = False,
    probe: Optional[Callable[["Sandbox"], None]] = None,
) -> tuple[int, int, bytes]:
    """Decode ``data`` in ``sb``; returns ``(width, height, pixels)``.

    A guest error exit surfaces as ``DecodeError``; violations and validation
    failures propagate as themselves.  ``probe`` runs after the last row while
    the decoder's callbacks are still registered (used by leak scans).
    """
    dec = _Stream(bytes(data), max(1, chunk))
    info = RliInfo(sb.invoke_ref("rli_create", capacity))
    if info.ref.is_null().verify(bool):
        raise DecodeError("guest could not allocate decoder state")
    dec.info = info
    dec.capacity = info.input_capacity.read().verify(in_range(16, 1 << 20))
    dec.buffer = info.input_buffer.read().within(dec.capacity)
    rowbuf: Optional[TaintedGuestRef] = None
    try:
        with sb.register_callback(make_fill(sb), ("ref:RliInfo",), "u32") as fill_reg, sb.register_callback(
            make_skip(sb), ("ref:RliInfo", "i32"), "void"
        ) as skip_reg:
            info.fill_input_buffer.write(fill_reg)
            info.skip_input_data.write(skip_reg)
            info.client_slot.write(dec.token)

            sb.set_invoke_context(DECODER_KEY, dec)
            sb.invoke("rli_read_header", info, 1).verify(one_of({HEADER_OK}))
            width = info.width.read().verify(in_range(1, MAX_DIM))
            height = info.height.read().verify(in_range(1, MAX_DIM))
            if width * height > MAX_PIXELS:
                raise ValidationError(f"{width}x{height} image exceeds the pixel budget")

            area = width * height
            pixels = bytearray(CANARY + bytes(area) + CANARY)
            lo = len(CANARY)
            rowbuf = sb.malloc(width)
            for _ in range(height):
                sb.set_invoke_context(DECODER_KEY, dec)
                sb.invoke("rli_decode_row", info, rowbuf).verify(one_of({ROW_OK}))
                with info.output_scanline.freeze() as scan:
                    # library invariant, checked on the frozen copy
                    line = scan.read().verify(in_range(1, height))
                    start = lo + (line - 1) * width
                    # application invariant
                    if not (lo <= start and start + width <= lo + area):
                        raise ValidationError("row outside the pixel buffer")
                    if unsafe_rows:
                        row = bytes(rowbuf.unsafe_unverified("rli.row_copy", count=width))
                    else:
                        row = rowbuf.copy_and_verify_array(width, _row_check(width))  # type: ignore[arg-type]
                    # the use re-reads the frozen value; a guest change since the check is caught here
                    scan.read()
                    pixels[start : start + width] = row
            if probe is not None:
                probe(sb)
            if pixels[:lo] != CANARY or pixels[lo + area :] != CANARY:
                raise ValidationError("pixel buffer canary overwritten")
    except GuestAbort as exc:
        raise DecodeError(f"decoder error exit {exc.code}") from exc
    finally:
        _cleanup(sb, info, rowbuf)
    return width, height, bytes(pixels[lo : lo + area])


def _cleanup(sb: "Sandbox", info: RliInfo, rowbuf: Optional[TaintedGuestRef]) -> None:
    if not sb.alive:
        return
    try:
        sb.invoke("rli_destroy", info)
    except Exception:  # the guest may be hostile or already broken; nothing to salvage
        pass
    if rowbuf is not None:
        try:
            sb.free(rowbuf)
        except Exception:
            pass


def decode_image(
    pool: "SandboxPool | Sandbox", origin: str, data: bytes, **kw: object
) -> bytes:
    """Decode one RLI image in a sandbox leased from ``pool`` for ``origin``."""
    from ..pool import SandboxKey, SandboxPool

    if isinstance(pool, SandboxPool):
        with pool.lease(SandboxKey("rli", origin, "image/x-rli")) as lease:
            return decode_with(lease.sandbox, data, **kw)[2]  # type: ignore[arg-type]
    return decode_with(pool, data, **kw)[2]  # type: ignore[arg-type]
