import io

import pytest

from edsoliton.cli_io.selftest import CHECKS, run_selftest


@pytest.mark.parametrize("module, check", CHECKS, ids=[f"{m}.{c.__name__}" for m, c in CHECKS])
def test_selftest_check(module, check):
    ok, detail = check()
    assert ok, detail


def test_selftest_report_format():
    buf = io.StringIO()
    assert run_selftest(buf) == 0
    lines = buf.getvalue().splitlines()
    assert len(lines) == len(CHECKS) + 1
    assert all(line.startswith("PASS ") for line in lines[:-1])
