"""Binary interface of the RLI decoder library: plain constants only.

The guest side is written against these offsets; the host side builds its
typed record from the same numbers (``info.RliInfo`` checks they agree).
"""

from __future__ import annotations

# guest status codes
SUSPENDED = 0
HEADER_TABLES_ONLY = 1
HEADER_OK = 2
ROW_OK = 1

# guest error-exit codes
ERR_BAD_MAGIC = 1
ERR_TRUNCATED = 2
ERR_BAD_HEADER = 3
ERR_CORRUPT = 4
ERR_TOO_MANY_ROWS = 5

NO_CALLBACK = 0xFFFFFFFF

INFO_SIZE = 48
# (name, offset, kind, freezable)
FIELDS = (
    ("width", 0, "u32", False),
    ("height", 4, "u32", False),
    ("output_scanline", 8, "u32", True),
    ("bytes_in_buffer", 12, "u32", False),
    ("next_input_offset", 16, "ref:u8", False),
    ("status", 20, "u32", False),
    ("client_slot", 24, "u32", False),
    ("fill_input_buffer", 28, "cb", False),
    ("skip_input_data", 32, "cb", False),
    ("input_buffer", 36, "ref:u8", False),
    ("input_capacity", 40, "u32", False),
    ("reserved", 44, "u32", False),
)
OFF = {name: off for name, off, _, _ in FIELDS}
