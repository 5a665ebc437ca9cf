import os

import pytest

_VERDICTS = []


class Verdict:
    """Collects the sub-checks of one acceptance criterion."""

    def __init__(self, number, title):
        self.number = number
        self.title = title
        self.checks = []

    def check(self, name, ok, detail=""):
        self.checks.append((name, bool(ok), detail))
        return bool(ok)

    @property
    def passed(self):
        return bool(self.checks) and all(ok for _, ok, _ in self.checks)

    def line(self):
        parts = [f"{name}={'ok' if ok else 'FAIL'}" + (f" ({detail})" if detail else "")
                 for name, ok, detail in self.checks]
        status = "PASS" if self.passed else "FAIL"
        return f"{status} criterion {self.number} [{self.title}]: " + "; ".join(parts)

    def finish(self):
        line = self.line()
        _VERDICTS.append((self.number, line))
        print(line)
        failed = [name for name, ok, _ in self.checks if not ok]
        assert not failed, f"failed checks: {', '.join(failed)}"


@pytest.fixture
def verdict():
    return Verdict


def pytest_collection_modifyitems(config, items):
    if os.environ.get("FWSW_FULL") == "1":
        return
    skip = pytest.mark.skip(reason="long run; set FWSW_FULL=1 to enable")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_VERDICTS, key=lambda v: str(v[0]).zfill(4)):
        terminalreporter.write_line(line)
