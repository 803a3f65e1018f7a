import numpy as np
import pytest
from hypothesis import settings

from cryptorates import Bessel3, Bessel4, RngStream, VolatilityCurve, initial_state

settings.register_profile("repo", deadline=None, derandomize=True, max_examples=60)
settings.load_profile("repo")


@pytest.fixture
def b3():
    return Bessel3()


@pytest.fixture
def b4():
    return Bessel4()


@pytest.fixture
def curve075():
    return VolatilityCurve.constant(0.75)


@pytest.fixture
def curve06():
    return VolatilityCurve.constant(0.6)


@pytest.fixture
def rng():
    return RngStream(20190417)


@pytest.fixture
def state3(b3):
    return initial_state(b3)


@pytest.fixture
def state4(b4):
    return initial_state(b4)


def z_score(est_mean, se, target):
    return (est_mean - target) / se if se > 0 else 0.0


def assert_within_3se(mean, se, target):
    __tracebackhide__ = True
    assert abs(mean - target) <= 3.0 * se, f"mean={mean} target={target} se={se} z={(mean - target) / se:.2f}"


@pytest.fixture
def within_3se():
    return assert_within_3se


@pytest.fixture
def np_rng():
    return np.random.default_rng(7)


_ACCEPTANCE: dict[int, tuple[str, bool, str]] = {}


@pytest.fixture
def acceptance():
    """Record one criterion's outcome for the summary, then assert it."""

    def check(number: int, title: str, ok: bool, detail: str = ""):
        __tracebackhide__ = True
        _ACCEPTANCE[number] = (title, bool(ok), detail)
        print(f"{'PASS' if ok else 'FAIL'} acceptance {number:2d}: {title} | {detail}")
        assert ok, f"acceptance {number} failed: {detail}"

    return check


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, ok, detail = _ACCEPTANCE[number]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} {number:2d}  {title}  [{detail}]")
