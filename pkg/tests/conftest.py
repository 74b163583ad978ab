import sys
import warnings

import pytest

from grammaraug import _backend, ctc, evaluation

BACKENDS = ["python"] + (["cython"] if _backend.compiled_kernels is not None else [])


@pytest.fixture(params=BACKENDS)
def backend(request, monkeypatch):
    """Run the test once per available kernel implementation."""
    mod = _backend.compiled_kernels if request.param == "cython" else _backend.python_kernels
    monkeypatch.setattr(ctc, "kernels", mod)
    monkeypatch.setattr(evaluation, "kernels", mod)
    return request.param


@pytest.fixture(autouse=True)
def _quiet_threshold_warnings():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", evaluation.ThresholdWarning)
        yield


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, ok, elapsed, detail in sorted(results):
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {number}. {title} ({elapsed:.2f}s){detail}")
