import random

import pytest

from bkd import Ledger, PulseStore
from bkd.pulse import Pulse


def random_pulse(rng, index=None):
    return Pulse.create(
        rng.randrange(1 << 64) if index is None else index,
        rng.randrange(1 << 40),
        rng.randbytes(64),
        rng.randbytes(32),
    )


def make_store(n, seed=0):
    return PulseStore.generate(n, random.Random(seed), start_time=1_700_000_000)


def make_ledgers(secret, group="grp", count=2):
    return [Ledger.create(secret, group) for _ in range(count)]


@pytest.fixture
def rng():
    return random.Random(1234)


@pytest.fixture
def store100():
    return make_store(100)


_ACCEPTANCE = []


@pytest.fixture
def criterion(request):
    """Record one acceptance line; the test body asserts, this just reports."""
    import time

    entry = {"name": request.node.name, "outcome": "FAIL", "detail": ""}
    _ACCEPTANCE.append(entry)
    start = time.perf_counter()
    yield entry
    entry["elapsed"] = time.perf_counter() - start


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call" and "criterion" in item.fixturenames:
        for entry in _ACCEPTANCE:
            if entry["name"] == item.name:
                entry["outcome"] = "PASS" if rep.passed else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for e in _ACCEPTANCE:
        terminalreporter.write_line(
            f"{e['outcome']}  {e['name']:<40} {e.get('elapsed', 0):6.2f}s  {e['detail']}"
        )
