"""The RLI image format and an independent reference decoder.

    "RLI1" | width u32 LE | height u32 LE | rows

Each row is a run of ``(count u8 >= 1, value u8)`` pairs closed by a single
``0`` byte; the counts of a row sum to ``width``.
"""

from __future__ import annotations

import random
import struct

MAGIC = b"RLI1"
HEADER = struct.Struct("<4sII")


class FormatError(ValueError):
    pass


def encode(pixels: bytes, width: int, height: int) -> bytes:
    if width <= 0 or height <= 0:
        raise ValueError("image dimensions must be positive")
    if len(pixels) != width * height:
        raise ValueError(f"expected {width * height} pixel bytes, got {len(pixels)}")
    out = bytearray(HEADER.pack(MAGIC, width, height))
    for y in range(height):
        row = pixels[y * width : (y + 1) * width]
        x = 0
        while x < width:
            v = row[x]
            n = 1
            while x + n < width and n < 255 and row[x + n] == v:
                n += 1
            out += bytes((n, v))
            x += n
        out.append(0)
    return bytes(out)


def oracle_decode(data: bytes) -> tuple[int, int, bytes]:
    """Reference decoder; deliberately written without any sandbox machinery."""
    if len(data) < HEADER.size:
        raise FormatError("truncated header")
    magic, w, h = HEADER.unpack_from(data)
    if magic != MAGIC or w == 0 or h == 0:
        raise FormatError("bad header")
    out = bytearray()
    i = HEADER.size
    for _ in range(h):
        row = bytearray()
        while True:
            if i >= len(data):
                raise FormatError("truncated row")
            n = data[i]
            i += 1
            if n == 0:
                break
            if i >= len(data):
                raise FormatError("truncated pair")
            row += bytes((data[i],)) * n
            i += 1
        if len(row) != w:
            raise FormatError(f"row has {len(row)} pixels, expected {w}")
        out += row
    return w, h, bytes(out)


def random_image(rng: random.Random, max_w: int = 256, max_h: int = 256, mean_run: float = 6.0) -> tuple[int, int, bytes]:
    """Random pixels made of runs, so the encoding exercises long and short pairs."""
    w = rng.randint(1, max_w)
    h = rng.randint(1, max_h)
    total = w * h
    out = bytearray()
    p = 1.0 / mean_run
    while len(out) < total:
        run = min(total - len(out), int(rng.expovariate(p)) + 1)
        out += bytes((rng.randrange(256),)) * run
    return w, h, bytes(out)
