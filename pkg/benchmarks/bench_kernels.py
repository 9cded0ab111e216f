"""Compiled (Cython) kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat N] [--json]

Each row is the best of ``--repeat`` auto-ranged timings of one operation, plus the
end-to-end decode of a random image on the emusfi backend under each
implementation (run in a subprocess, since the choice is made at import).
"""

from __future__ import annotations

import argparse
import json
import os
import random
import subprocess
import sys
import timeit
from typing import Any, Callable

from sandcage.kernels import implementation, native_available
from sandcage.region import AlignedMapping
from sandcage.rli.format import encode, random_image

REGION = 1 << 20


def _cases(k: Any, mapping: AlignedMapping) -> dict[str, Callable[[], object]]:
    region = k.MaskedRegion(mapping.base, mapping.size, mapping.view)
    rng = random.Random(0)
    w, h, px = random_image(rng, 256, 256)
    data = encode(px, w, h)
    src, dst = 4096, 4096 + len(data) + 64
    region.write(src, data)
    rows = [(src + 12, len(data) - 12)]
    targets = frozenset(rng.getrandbits(64) for _ in range(8))
    scan_view = mapping.view[: 1 << 16]
    addr = mapping.base + 64

    def decode_all() -> None:
        s, avail = rows[0]
        x = 0
        for y in range(h):
            s, avail, x, state = region.decode_row(s, avail, dst + y * w, 0, w)

    return {
        "load u32 x1000": lambda: [region.load(i * 4, 4) for i in range(1000)],
        "store u32 x1000": lambda: [region.store(i * 4, 4, i) for i in range(1000)],
        "read 4 KiB x100": lambda: [region.read(i * 64, 4096) for i in range(100)],
        f"decode_row {w}x{h}": decode_all,
        "scan_u64 64 KiB": lambda: k.scan_u64(scan_view, targets),
        "raw load_u32 x1000": lambda: [k.load_u32(addr) for _ in range(1000)],
    }


def _decode_child(impl: str, repeat: int) -> float:
    env = dict(os.environ, SANDCAGE_PURE_PYTHON="1" if impl == "python" else "0")
    code = (
        "import random, timeit\n"
        "from sandcage import create_sandbox\n"
        "from sandcage.rli.format import encode, random_image\n"
        "from sandcage.rli.host import decode_with\n"
        "w, h, px = random_image(random.Random(0), 256, 256)\n"
        "data = encode(px, w, h)\n"
        "sb = create_sandbox('emusfi', 1 << 22)\n"
        "decode_with(sb, data)\n"
        f"print(min(timeit.repeat(lambda: decode_with(sb, data), number=1, repeat={repeat})))\n"
    )
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    return float(out.stdout.strip())


def main() -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--json", action="store_true")
    args = p.parse_args()
    if not native_available():
        print("compiled kernels are not built; run `pip install --no-build-isolation -e .`", file=sys.stderr)
        return 1
    mapping = AlignedMapping(REGION)
    results: dict[str, dict[str, float]] = {}
    try:
        for impl in ("python", "cython"):
            for name, fn in _cases(implementation(impl), mapping).items():
                timer = timeit.Timer(fn)
                number, _ = timer.autorange()
                best = min(timer.repeat(args.repeat, number)) / number
                results.setdefault(name, {})[impl] = best
    finally:
        mapping.close()
    name = "emusfi decode 256x256 (end to end)"
    results[name] = {impl: _decode_child(impl, args.repeat) for impl in ("python", "cython")}
    if args.json:
        print(json.dumps(results, indent=2))
        return 0
    print(f"{'operation':40} {'python':>12} {'cython':>12} {'speedup':>9}")
    for name, r in results.items():
        print(f"{name:40} {r['python'] * 1e6:10.0f}us {r['cython'] * 1e6:10.0f}us {r['python'] / r['cython']:8.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
