from __future__ import annotations

import os
import random
import subprocess
import sys

import pytest
from hypothesis import given
from hypothesis import strategies as st

from sandcage.errors import DecodeError
from sandcage.pool import PoolConfig, SandboxPool
from sandcage.rli import FormatError, encode, oracle_decode, random_image
from sandcage.rli.encode_cli import main as encode_main
from sandcage.rli.host import decode_image, decode_with

EXAMPLE = b"RLI1\x02\x00\x00\x00\x02\x00\x00\x00\x02A\x00\x01A\x01B\x00"


def test_worked_example_encodes() -> None:
    assert encode(b"AAAB", 2, 2) == EXAMPLE


def test_worked_example_decodes(any_sb) -> None:
    assert oracle_decode(EXAMPLE) == (2, 2, b"AAAB")
    assert decode_with(any_sb, EXAMPLE) == (2, 2, b"AAAB")


def test_long_runs_split_at_255() -> None:
    data = encode(b"\x07" * 600, 600, 1)
    assert data[12:] == b"\xff\x07\xff\x07\x5a\x07\x00"


@pytest.mark.parametrize("w,h,px", [(0, 1, b""), (2, 2, b"abc"), (1, -1, b"")])
def test_encode_rejects(w: int, h: int, px: bytes) -> None:
    with pytest.raises(ValueError):
        encode(px, w, h)


@given(st.integers(1, 40), st.integers(1, 12), st.data())
def test_oracle_round_trip(w: int, h: int, data) -> None:
    px = data.draw(st.binary(min_size=w * h, max_size=w * h))
    assert oracle_decode(encode(px, w, h)) == (w, h, px)


@pytest.mark.parametrize(
    "bad",
    [b"", b"RLI1", b"XLI1" + EXAMPLE[4:], EXAMPLE[:-1], EXAMPLE[:-2], b"RLI1" + bytes(8), EXAMPLE[:12] + b"\x03A\x00" + EXAMPLE[15:]],
)
def test_oracle_rejects(bad: bytes) -> None:
    with pytest.raises(FormatError):
        oracle_decode(bad)


@pytest.mark.parametrize(
    "bad",
    [b"", EXAMPLE[:8], b"XLI1" + EXAMPLE[4:], EXAMPLE[:-1], b"RLI1" + bytes(8), EXAMPLE[:12] + b"\x01A\x00" + EXAMPLE[15:]],
    ids=["empty", "short-header", "magic", "truncated", "zero-dims", "short-row"],
)
def test_sandboxed_decoder_rejects(any_sb, bad: bytes) -> None:
    with pytest.raises(DecodeError):
        decode_with(any_sb, bad)
    assert decode_with(any_sb, EXAMPLE)[2] == b"AAAB"  # still usable


def test_matches_oracle_on_random_sample(any_sb) -> None:
    rng = random.Random(1234)
    for _ in range(15):
        w, h, px = random_image(rng, 64, 64)
        data = encode(px, w, h)
        assert decode_with(any_sb, data) == oracle_decode(data) == (w, h, px)


@pytest.mark.parametrize("chunk", [1, 5, 64, 4096])
def test_chunk_sizes_do_not_matter(sb, chunk: int) -> None:
    w, h, px = random_image(random.Random(chunk), 90, 30)
    assert decode_with(sb, encode(px, w, h), chunk=chunk, capacity=256) == (w, h, px)


def test_decoder_cleans_up(sb) -> None:
    before = sb.backend.heap.allocated
    decode_with(sb, EXAMPLE)
    with pytest.raises(DecodeError):
        decode_with(sb, EXAMPLE[:-1])
    assert sb.backend.heap.allocated == before
    assert sb.active_callbacks() == []


def test_unsafe_rows_are_audited(sb, audit_lines) -> None:
    assert decode_with(sb, EXAMPLE, unsafe_rows=True)[2] == b"AAAB"
    assert audit_lines == [f"UNSAFE {sb.id} rli.row_copy"] * 2


def test_decode_image_through_pool() -> None:
    with SandboxPool(PoolConfig(region_size=1 << 20)) as pool:
        assert decode_image(pool, "https://a.example", EXAMPLE) == b"AAAB"
        assert decode_image(pool, "https://a.example", EXAMPLE) == b"AAAB"
        assert pool.created == 1 and pool.reused == 1


def test_decode_image_on_sandbox(sb) -> None:
    assert decode_image(sb, "ignored", EXAMPLE) == b"AAAB"


# --- encoder CLI ------------------------------------------------------------------------------


def test_encode_cli_raw(tmp_path) -> None:
    raw = tmp_path / "px.raw"
    raw.write_bytes(b"AAAB")
    out = tmp_path / "img.rli"
    assert encode_main([str(raw), "2", "2", "-o", str(out)]) == 0
    assert out.read_bytes() == EXAMPLE


def test_encode_cli_random_is_seeded(tmp_path) -> None:
    a, b = tmp_path / "a", tmp_path / "b"
    assert encode_main(["--random", "5", "-o", str(a), "--seed", "3", "--max-dim", "32"]) == 0
    encode_main(["--random", "5", "-o", str(b), "--seed", "3", "--max-dim", "32"])
    names = sorted(os.listdir(a))
    assert names == [f"img{i:04d}.rli" for i in range(5)]
    for n in names:
        data = (a / n).read_bytes()
        assert data == (b / n).read_bytes()
        w, h, _ = oracle_decode(data)
        assert w <= 32 and h <= 32


@pytest.mark.parametrize(
    "argv",
    [[], ["x", "2", "2"], ["--random", "0", "-o", "d"], ["--random", "2", "raw", "-o", "d"]],
)
def test_encode_cli_usage_errors(argv: list[str]) -> None:
    with pytest.raises(SystemExit) as ei:
        encode_main(argv)
    assert ei.value.code == 2


def test_encode_cli_size_mismatch(tmp_path) -> None:
    raw = tmp_path / "px.raw"
    raw.write_bytes(b"AAA")
    with pytest.raises(SystemExit):
        encode_main([str(raw), "2", "2", "-o", str(tmp_path / "o")])


def test_encode_cli_as_module(tmp_path) -> None:
    raw = tmp_path / "px.raw"
    raw.write_bytes(b"AAAB")
    out = tmp_path / "img.rli"
    env = dict(os.environ, PYTHONPATH=os.pathsep.join(sys.path))
    subprocess.run([sys.executable, "-m", "sandcage.rli.encode_cli", str(raw), "2", "2", "-o", str(out)], check=True, env=env)
    assert out.read_bytes() == EXAMPLE
