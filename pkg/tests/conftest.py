from __future__ import annotations

import pytest

_KEY = pytest.StashKey[dict]()


class AcceptanceLog:
    def __init__(self, store: dict):
        self.store = store

    def record(self, number: int, title: str, ok: bool, detail: str) -> bool:
        line = f"ACCEPTANCE {number:02d} {'PASS' if ok else 'FAIL'} {title}: {detail}"
        self.store[number] = line
        print(line)
        return ok


@pytest.fixture(scope="session")
def acceptance(request) -> AcceptanceLog:
    return AcceptanceLog(request.config.stash.setdefault(_KEY, {}))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = config.stash.get(_KEY, {})
    if not store:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(store):
        terminalreporter.write_line(store[n])
