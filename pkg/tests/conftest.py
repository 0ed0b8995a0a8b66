import numpy as np
import pytest

from conftractor import jets as J
from conftractor.riemann import as_metric

_CRITERIA = {}


def poly(X, rng, deg=3, amp=0.3):
    """Random polynomial jet of total degree <= deg in the coordinate jets X."""
    d = len(X)
    out = X[0] * 0.0
    for a in J.multi_indices(d, deg):
        t = amp * rng.normal()
        for i, e in enumerate(a):
            for _ in range(e):
                t = t * X[i]
        out = out + t
    return out


def random_metric(X, rng, amp=0.2):
    d = len(X)
    g = [[(1.0 if i == j else 0.0) + amp * poly(X, rng, 2, 0.3) for j in range(d)] for i in range(d)]
    g = [[g[min(i, j)][max(i, j)] for j in range(d)] for i in range(d)]
    return as_metric(g, d, X[0].order)


def flat_metric(d, order):
    return as_metric([[1.0 if i == j else 0.0 for j in range(d)] for i in range(d)], d, order)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number n")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    n, title = mark.args
    if rep.when == "call" or (rep.when == "setup" and rep.failed):
        prev = _CRITERIA.get(n, (title, True))
        _CRITERIA[n] = (title, prev[1] and rep.passed)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        title, ok = _CRITERIA[n]
        tr.write_line(f"{'PASS' if ok else 'FAIL'} criterion {n:2d}: {title}")
