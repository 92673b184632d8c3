"""The in-process integration suite and its fault injections."""

import pytest

from twincar.suite import FAULT_INJECTIONS, SuiteReport, run_integration_suite

STAGES = (
    "unit-invariants",
    "codec-vectors",
    "thread-fidelity",
    "shadow-unidirectional",
    "twin-mirroring",
    "one-meter",
)


@pytest.fixture(scope="module")
def clean_report():
    return run_integration_suite()


def test_clean_run_passes_all_stages(clean_report):
    assert clean_report.ok
    assert tuple(c.name for c in clean_report.checks) == STAGES
    assert all(c.passed for c in clean_report.checks)
    assert clean_report.fault_injection is None


def test_report_records(clean_report):
    records = clean_report.to_records()
    assert len(records) == 7
    header = records[0]
    assert header == {
        "suite": "twincar-integration",
        "ok": True,
        "fault_injection": None,
        "checks": 6,
    }
    for record in records[1:]:
        assert set(record) == {"name", "passed", "detail", "duration_s"}
        assert record["duration_s"] >= 0


def test_clamp_injection_fails_exactly_the_clamp_sensitive_stages():
    report = run_integration_suite(inject_fault="clamp")
    assert not report.ok
    outcome = {c.name: c.passed for c in report.checks}
    assert outcome == {
        "unit-invariants": False,
        "codec-vectors": True,
        "thread-fidelity": True,
        "shadow-unidirectional": True,
        "twin-mirroring": False,
        "one-meter": True,
    }
    failing = {c.name: c.detail for c in report.checks if not c.passed}
    assert "25.0" in failing["unit-invariants"]
    assert report.fault_injection == "clamp"


def test_bridge_cut_injection_fails_exactly_thread_fidelity():
    report = run_integration_suite(inject_fault="bridge-cut")
    assert not report.ok
    outcome = {c.name: c.passed for c in report.checks}
    assert outcome == {
        "unit-invariants": True,
        "codec-vectors": True,
        "thread-fidelity": False,
        "shadow-unidirectional": True,
        "twin-mirroring": True,
        "one-meter": True,
    }
    detail = next(c.detail for c in report.checks if c.name == "thread-fidelity")
    assert "0/5" in detail


def test_unknown_injection_rejected():
    assert FAULT_INJECTIONS == ("clamp", "bridge-cut")
    with pytest.raises(ValueError, match="unknown fault injection"):
        run_integration_suite(inject_fault="gremlins")


def test_failures_do_not_abort_later_stages():
    # even with the first stage failing, all six stages report
    report = run_integration_suite(inject_fault="clamp")
    assert len(report.checks) == 6


def test_report_ok_property():
    from twincar.suite import SuiteCheck

    good = SuiteCheck("a", True, "", 0.0)
    bad = SuiteCheck("b", False, "boom", 0.0)
    assert SuiteReport((good,)).ok
    assert not SuiteReport((good, bad)).ok
