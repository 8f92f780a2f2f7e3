import numpy as np
import pytest

from adabins.numerics import precision


@pytest.fixture
def f64():
    """Run the test body with float64 as the default tensor dtype."""
    with precision(np.float64):
        yield


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def trained_toy():
    """A default-size model briefly trained on 8 synthetic scenes, with its corpus and config."""
    from adabins.harness.config import Config
    from adabins.harness.train import load_data, train

    cfg = Config().replace(data__n_samples=8, train__steps=150, train__log_every=0)
    corpus = load_data(cfg)
    return train(cfg, corpus=corpus).model, corpus, cfg


# ---------------------------------------------------------------------------
# acceptance summary: one pass/fail line per criterion at the end of the run

ACCEPTANCE_DETAILS: dict = {}
_ACCEPTANCE_OUTCOMES: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when != "call" and not report.failed:
        return
    number, title = marker.args
    prev = _ACCEPTANCE_OUTCOMES.get(number, (title, True))
    _ACCEPTANCE_OUTCOMES[number] = (title, prev[1] and report.passed)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE_OUTCOMES):
        title, ok = _ACCEPTANCE_OUTCOMES[number]
        detail = ACCEPTANCE_DETAILS.get(number, "")
        terminalreporter.write_line(f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}" + (f"  [{detail}]" if detail else ""))
