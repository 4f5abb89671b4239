import pytest
from hypothesis import HealthCheck, settings

from evquad.predictor import ModelWeights, default_weights

settings.register_profile("evquad", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("evquad")


@pytest.fixture(scope="session")
def model():
    return default_weights()


@pytest.fixture(scope="session")
def uniform():
    return ModelWeights.zeros()


# ---------------------------------------------------- acceptance summary lines

_RESULTS = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or (rep.when != "call" and rep.passed):
        return
    number, title = marker.args
    props = dict(item.user_properties)
    if rep.failed:
        status = "FAIL"
    elif rep.skipped:
        status = "SKIP"
    else:
        status = "WARN" if props.get("warning") else "PASS"
    detail = props.get("warning") or props.get("detail", "")
    _RESULTS[number] = (status, title, detail)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_RESULTS):
        status, title, detail = _RESULTS[number]
        tr.write_line(f"[{status}] criterion {number:2d}: {title}" + (f"  ({detail})" if detail else ""))
