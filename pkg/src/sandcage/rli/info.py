"""The record shared between the decoder host and the guest library."""

from __future__ import annotations

from ..layout import record
from ..records import CallbackField, Field, FreezableField, GuestRecord, RefField
from .abi import (  # noqa: F401  (re-exported for host code)
    ERR_BAD_HEADER,
    ERR_BAD_MAGIC,
    ERR_CORRUPT,
    ERR_TOO_MANY_ROWS,
    ERR_TRUNCATED,
    FIELDS,
    HEADER_OK,
    HEADER_TABLES_ONLY,
    INFO_SIZE,
    OFF,
    ROW_OK,
    SUSPENDED,
)


class RliInfo(GuestRecord, size=INFO_SIZE):
    width = Field(OFF["width"], "u32")
    height = Field(OFF["height"], "u32")
    output_scanline = FreezableField(OFF["output_scanline"], "u32")
    bytes_in_buffer = Field(OFF["bytes_in_buffer"], "u32")
    next_input_offset = RefField(OFF["next_input_offset"], "u8")
    status = Field(OFF["status"], "u32")
    client_slot = Field(OFF["client_slot"], "u32")
    fill_input_buffer = CallbackField(OFF["fill_input_buffer"])
    skip_input_data = CallbackField(OFF["skip_input_data"])
    input_buffer = RefField(OFF["input_buffer"], "u8")
    input_capacity = Field(OFF["input_capacity"], "u32")
    reserved = Field(OFF["reserved"], "u32")


if record("RliInfo", FIELDS, INFO_SIZE, register=False) != RliInfo.layout():
    raise ImportError("RliInfo layout disagrees with the guest ABI")
