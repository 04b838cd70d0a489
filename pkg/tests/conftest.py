import random

import pytest

from selftally.group import get_group
from selftally.sigma import ProofContext

_criteria: dict[int, list[str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        details = [v for k, v in item.user_properties if k == "detail"]
        _criteria.setdefault(mark.args[0], []).append((item.name, rep.outcome, details))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        results = _criteria[n]
        verdict = "PASS" if all(o == "passed" for _, o, _ in results) else "FAIL"
        failed = [name for name, o, _ in results if o != "passed"]
        suffix = f"  failing: {', '.join(failed)}" if failed else ""
        terminalreporter.write_line(f"criterion {n:2d}: {verdict}  ({len(results) - len(failed)}/{len(results)} tests){suffix}")
        for _, _, details in results:
            for d in details:
                terminalreporter.write_line(f"              {d}")


@pytest.fixture(scope="session")
def tiny():
    return get_group("test-tiny")


@pytest.fixture(scope="session")
def std():
    return get_group("standard")


@pytest.fixture(params=["test-tiny", "standard"])
def group(request):
    return get_group(request.param)


@pytest.fixture
def rng():
    return random.Random(20240607)


@pytest.fixture
def ctx():
    return ProofContext(b"test-election", 1, "test")
