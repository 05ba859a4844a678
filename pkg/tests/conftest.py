import numpy as np
import pytest


def sym_gauss(n, rng, zero_diag=True):
    W = rng.standard_normal((n, n))
    W = np.triu(W, 1)
    W = W + W.T
    if not zero_diag:
        W += np.diag(rng.standard_normal(n))
    return W


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for key in sorted(results):
        title, ok, detail = results[key]
        tr.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {key:2d} {title}: {detail}")
