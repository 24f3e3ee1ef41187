"""Collects acceptance-criterion outcomes and prints one PASS/FAIL line each."""
import pytest

_results = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    n, title = mark.args
    failed = rep.failed
    if rep.when == "call" or failed:
        detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
        prev = _results.get(n)
        ok = not failed and (prev is None or prev[1])
        details = [d for d in ((prev[2] if prev else ""), detail) if d]
        _results[n] = (title, ok, "; ".join(details))


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_results):
        title, ok, detail = _results[n]
        line = f"{'PASS' if ok else 'FAIL'}  criterion {n:>2}: {title}"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)
