from __future__ import annotations

import csv
import io
import json
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from sandcage.bench import runs
from sandcage.bench.cli import EXIT_ASSERT, EXIT_USAGE, check_ordering, evaluate
from sandcage.bench.cli import main as bench_main
from sandcage.bench.report import FIELDS, BenchReport, percentiles, to_csv
from sandcage.cli import main as top_main
from sandcage.rli import encode

MiB = str(1 << 20)


def linear_percentile(xs: list[float], p: float) -> float:
    """Oracle: linear interpolation between closest ranks on the sorted sample."""
    s = sorted(xs)
    pos = p * (len(s) - 1)
    lo = math.floor(pos)
    hi = min(lo + 1, len(s) - 1)
    return s[lo] + (s[hi] - s[lo]) * (pos - lo)


def test_percentiles_known_values() -> None:
    assert percentiles(list(range(1, 101))) == pytest.approx((50.5, 90.1, 99.01))
    assert percentiles([7.0]) == (7.0, 7.0, 7.0)
    with pytest.raises(ValueError):
        percentiles([])


@given(st.lists(st.floats(0, 1e9, allow_nan=False), min_size=2, max_size=200))
def test_percentiles_match_oracle(xs: list[float]) -> None:
    got = percentiles(xs)
    for g, p in zip(got, (0.5, 0.9, 0.99)):
        assert g == pytest.approx(linear_percentile(xs, p), rel=1e-9, abs=1e-6)


def _parse_lines(text: str) -> list[dict]:
    return [json.loads(line) for line in text.splitlines() if line.strip()]


def test_transfer_latency_json_schema(capsys) -> None:
    assert bench_main(["transfer-latency", "--backend", "null,emusfi", "--iters", "200", "--warmup", "5", "--region-size", MiB]) == 0
    rows = _parse_lines(capsys.readouterr().out)
    assert [r["backend"] for r in rows] == ["null", "emusfi"]
    for r in rows:
        assert set(FIELDS) - {"mem_bytes_per_sandbox"} <= set(r)
        assert r["bench"] == "transfer-latency"
        assert r["samples"] == 200
        assert 0 < r["p50"] <= r["p90"] <= r["p99"]
        assert r["params"]["iters"] == 200 and r["params"]["warmup"] == 5


def test_process_both_sync_modes(capsys) -> None:
    args = ["transfer-latency", "--backend", "process", "--sync", "spin,event", "--iters", "50", "--warmup", "2", "--region-size", MiB]
    assert bench_main(args) == 0
    rows = _parse_lines(capsys.readouterr().out)
    assert [r["params"]["sync"] for r in rows] == ["spin", "event"]


def test_csv_has_the_same_fields(capsys) -> None:
    assert bench_main(["creation", "--backend", "emusfi", "--count", "5", "--warmup", "1", "--region-size", MiB, "--csv"]) == 0
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert len(rows) == 1
    assert tuple(rows[0]) == FIELDS
    assert rows[0]["samples"] == "5"
    assert json.loads(rows[0]["params"])["count"] == 5


def test_out_file(tmp_path) -> None:
    out = tmp_path / "r.json"
    assert bench_main(["creation", "--count", "2", "--warmup", "0", "--region-size", MiB, "--out", str(out)]) == 0
    assert _parse_lines(out.read_text())[0]["samples"] == 2


def test_decode_bench_reports_overhead(capsys) -> None:
    assert bench_main(["decode", "--images", "4", "--warmup", "1", "--region-size", MiB]) == 0
    row = _parse_lines(capsys.readouterr().out)[0]
    assert row["samples"] == 4 and row["params"]["images"] == 4
    assert "relative_overhead" in row["params"]


def test_decode_bench_reads_corpus(tmp_path, capsys) -> None:
    (tmp_path / "a.rli").write_bytes(encode(b"AAAB", 2, 2))
    assert bench_main(["decode", "--corpus", str(tmp_path), "--warmup", "0", "--region-size", MiB]) == 0
    assert _parse_lines(capsys.readouterr().out)[0]["samples"] == 1
    empty = tmp_path / "empty"
    empty.mkdir()
    assert bench_main(["decode", "--corpus", str(empty), "--region-size", MiB]) == EXIT_USAGE


def test_scaling_memory_fields() -> None:
    rep = runs.scaling(8, runs.default_image(dim=16), region_size=1 << 20, threads=2, mem_batch=2)
    d = rep.to_dict()
    assert d["samples"] == 8
    assert d["mem_bytes_per_sandbox"] > 0
    assert len(d["params"]["mem_increments"]) == 4
    assert d["params"]["threads"] == 2


@pytest.mark.parametrize(
    "argv",
    [
        ["transfer-latency", "--iters", "0"],
        ["transfer-latency", "--backend", "wasm"],
        ["transfer-latency", "--sync", "busy"],
        ["creation", "--count", "-3"],
        ["nonsense"],
        [],
        ["creation", "--assert", "p50 ~ 3"],
    ],
)
def test_usage_errors_exit_2(argv: list[str]) -> None:
    assert bench_main(argv) == EXIT_USAGE


def test_failed_assertion_exits_3(capsys) -> None:
    args = ["creation", "--count", "3", "--warmup", "0", "--region-size", MiB]
    assert bench_main(args + ["--assert", "p50>0"]) == 0
    assert bench_main(args + ["--assert", "p50<0"]) == EXIT_ASSERT
    assert "p50" in capsys.readouterr().err


def _fake(backend: str, p50: float, sync: str | None = None) -> BenchReport:
    return BenchReport("transfer-latency", backend, {"sync": sync}, [p50])


def test_ordering_check() -> None:
    good = [_fake("null", 100), _fake("emusfi", 500), _fake("process", 1000, "spin"), _fake("process", 5000, "event")]
    assert check_ordering(good) == []
    slow_event = good[:2] + [_fake("process", 1000, "spin"), _fake("process", 1100, "event")]
    assert any("EVENT/SPIN" in f for f in check_ordering(slow_event))
    slow_sfi = [_fake("null", 10)] + good[2:] + [_fake("emusfi", 500)]
    assert any("emusfi/null" in f for f in check_ordering(slow_sfi))
    assert check_ordering(good[:1]) != []
    assert evaluate(["ordering", "p50>=100"], good) == []


def test_missing_field_in_check() -> None:
    with pytest.raises(KeyError):
        evaluate(["params.nothing<1"], [_fake("null", 1)])


def test_to_csv_without_memory() -> None:
    text = to_csv([_fake("null", 3)])
    row = next(csv.DictReader(io.StringIO(text)))
    assert row["mem_bytes_per_sandbox"] == ""


# --- top-level dispatcher ------------------------------------------------------------------------


def test_dispatcher(capsys) -> None:
    assert top_main([]) == 2
    assert top_main(["--help"]) == 0
    assert "bench" in capsys.readouterr().out
    assert top_main(["frobnicate"]) == 2
    assert top_main(["bench", "transfer-latency", "--iters", "0"]) == EXIT_USAGE
