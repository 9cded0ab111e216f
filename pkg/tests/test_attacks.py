from __future__ import annotations

import struct
import xml.etree.ElementTree as ET

import pytest

from sandcage.attacks import leaks
from sandcage.attacks.cli import main as attacks_main
from sandcage.attacks.report import CaseResult, Report
from sandcage.attacks.runtime import ATTACKS, freeze_race, run_runtime_attacks
from sandcage.attacks.static import CORPUS, run_static_rejections
from sandcage.attacks.taintcheck import TAINT_CODE, check
from sandcage.rli import encode
from sandcage.rli.host import decode_with


@pytest.fixture(scope="module")
def runtime_report() -> Report:
    return run_runtime_attacks(runs=3, seed=7)


@pytest.fixture(scope="module")
def static_report() -> Report:
    return run_static_rejections()


def test_eight_attack_classes() -> None:
    assert [a.name for a in ATTACKS] == [f"M{i}" for i in range(1, 9)]


@pytest.mark.parametrize("backend", ["emusfi", "process"])
def test_every_attack_is_contained(runtime_report: Report, backend: str) -> None:
    rs = [r for r in runtime_report.results if r.suite == backend]
    assert len(rs) == 1 + len(ATTACKS)
    bad = [(r.name, r.outcome, r.detail) for r in rs if not r.passed]
    assert bad == []


def test_static_corpus_rejected_and_twins_accepted(static_report: Report) -> None:
    assert len(CORPUS) == 10
    assert static_report.count("static") == (10, 10)
    assert static_report.count("static-twins") == (10, 10)


def test_taintcheck_flags_branch_on_tainted() -> None:
    entry = next(e for e in CORPUS if "branch" in e.path)
    diags = check([entry.path, entry.fixed_path])
    assert any(f"[{TAINT_CODE}]" in d.message for d in diags[entry.path])
    assert diags[entry.fixed_path] == []


def test_freeze_race_never_consumes_attacker_value() -> None:
    tally = freeze_race("emusfi", 300, seed=1)
    assert sum(tally.values()) == 300
    assert "WRONG OUTPUT" not in tally
    assert tally.get("correct", 0) > 0


def test_report_formats() -> None:
    rep = Report("demo")
    rep.add(CaseResult("s", "good", True, "ok", seconds=0.5))
    rep.add(CaseResult("s", "bad <1>", False, "boom", "detail & more"))
    assert not rep.ok and rep.count("s") == (1, 2)
    assert [r.name for r in rep.failures] == ["bad <1>"]
    assert "bad <1>" in rep.to_text()
    root = ET.fromstring(rep.to_junit())
    cases = root.iter("testcase")
    names = [c.get("name") for c in cases]
    assert names == ["good", "bad <1>"]
    assert len(list(root.iter("failure"))) == 1
    assert not Report("empty").ok


def test_attacks_cli(tmp_path, capsys) -> None:
    junit, text = tmp_path / "out.xml", tmp_path / "out.txt"
    code = attacks_main(["runtime", "--backend", "emusfi", "--runs", "1", "--junit", str(junit), "--text", str(text)])
    assert code == 0
    out = capsys.readouterr().out
    assert out.strip().endswith("9/9 cases passed")
    assert out.count("PASS emusfi/") == 9
    assert len(list(ET.parse(junit).getroot().iter("testcase"))) == 9
    assert "M8" in text.read_text()


def test_attacks_cli_bad_suite() -> None:
    with pytest.raises(SystemExit):
        attacks_main(["bogus"])


# --- leak scan ---------------------------------------------------------------------------------


def test_leak_targets(sb) -> None:
    reg = sb.register_callback(lambda: 0)
    targets = leaks.host_address_targets([sb])
    assert {sb.base, id(sb), id(reg), id(reg.fn)} <= targets
    assert 0 not in targets


def test_scan_finds_planted_address_at_any_alignment(sb) -> None:
    targets = leaks.host_address_targets([sb])
    assert leaks.scan(sb, targets) == []
    struct.pack_into("<Q", sb.view, 0x1003, sb.base)
    assert leaks.scan(sb, targets) == [0x1003]


def test_decode_leaves_no_host_address(iso_sb) -> None:
    hits: list[int] = []

    def probe(s) -> None:
        hits.extend(leaks.scan(s, leaks.host_address_targets([s])))

    decode_with(iso_sb, encode(b"xy" * 50, 10, 10), probe=probe)
    assert hits == []
