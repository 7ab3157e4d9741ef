import pytest

from redetrack import _fallback

try:
    from redetrack import _kernels
except ImportError:  # pragma: no cover - compiled core missing
    _kernels = None

KERNEL_MODULES = [pytest.param(_fallback, id="python")]
if _kernels is not None:
    KERNEL_MODULES.append(pytest.param(_kernels, id="cython"))


@pytest.fixture(params=KERNEL_MODULES)
def kernels(request):
    """Each available kernel implementation in turn."""
    return request.param


# criterion number -> (passed, detail); filled by the acceptance tests
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def criterion():
    """Record and print the outcome of one acceptance criterion."""

    def record(number: int, ok: bool, detail: str) -> bool:
        ACCEPTANCE[number] = (ok, detail)
        print(f"criterion {number}: {'PASS' if ok else 'FAIL'} {detail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
