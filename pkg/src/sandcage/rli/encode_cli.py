"""``rli-encode``: encode raw 8-bit pixels as RLI, or write a seeded random corpus.

    rli-encode <raw> <w> <h> -o <file>
    rli-encode --random N -o <dir> [--seed S] [--max-dim D]
"""

from __future__ import annotations

import argparse
import os
import random
import sys
from typing import Sequence

from .format import encode, random_image


def main(argv: Sequence[str] | None = None) -> int:
    p = argparse.ArgumentParser(prog="rli-encode", description=__doc__.splitlines()[0] if __doc__ else None)
    p.add_argument("raw", nargs="?", help="raw pixel file, one byte per pixel, row-major")
    p.add_argument("width", nargs="?", type=int)
    p.add_argument("height", nargs="?", type=int)
    p.add_argument("-o", "--output", required=True, help="output file (or directory with --random)")
    p.add_argument("--random", type=int, metavar="N", help="write N random images into the output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-dim", type=int, default=256)
    args = p.parse_args(argv)

    if args.random is not None:
        if args.raw is not None:
            p.error("--random takes no raw input")
        if args.random <= 0 or args.max_dim <= 0:
            p.error("--random and --max-dim must be positive")
        os.makedirs(args.output, exist_ok=True)
        rng = random.Random(args.seed)
        for n in range(args.random):
            w, h, px = random_image(rng, args.max_dim, args.max_dim)
            with open(os.path.join(args.output, f"img{n:04d}.rli"), "wb") as fh:
                fh.write(encode(px, w, h))
        return 0

    if args.raw is None or args.width is None or args.height is None:
        p.error("expected <raw> <w> <h>")
    with open(args.raw, "rb") as fh:
        pixels = fh.read()
    try:
        data = encode(pixels, args.width, args.height)
    except ValueError as exc:
        p.error(str(exc))
    with open(args.output, "wb") as fh:
        fh.write(data)
    return 0


if __name__ == "__main__":
    sys.exit(main())
