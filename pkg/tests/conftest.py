import pytest

_ACCEPTANCE = {}


@pytest.fixture
def criterion(request):
    """Record a pass/fail line for an acceptance criterion: ``criterion(n, title)`` then ``.detail(...)``."""

    class Entry:
        def __init__(self):
            self.number, self.title, self.notes = None, "", []

        def __call__(self, number, title):
            self.number, self.title = number, title
            return self

        def detail(self, text):
            self.notes.append(text)

    entry = Entry()
    yield entry
    rep = getattr(request.node, "rep_call", None)
    ok = rep is not None and rep.passed
    _ACCEPTANCE.setdefault(entry.number, []).append((ok, entry.title, "; ".join(entry.notes)))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        results = _ACCEPTANCE[number]
        ok = all(r[0] for r in results)
        title = results[0][1]
        notes = " | ".join(r[2] for r in results if r[2])
        tr.write_line(f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}" + (f"  [{notes}]" if notes else ""))
