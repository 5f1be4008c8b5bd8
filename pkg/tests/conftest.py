import numpy as np
import pytest

from edbl.model import Model


def central_difference(f, x, eps=1e-5):
    """Central finite-difference gradient of scalar ``f`` at array ``x`` (perturbed in place)."""
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        orig = x[i]
        x[i] = orig + eps
        up = f()
        x[i] = orig - eps
        down = f()
        x[i] = orig
        grad[i] = (up - down) / (2 * eps)
    return grad


def random_model(rng, input_dim=5, hidden=(7, 6), old=3, new=2):
    """Model with ``old + new`` head rows, ``old`` of them marked as previous classes."""
    model = Model(input_dim, hidden, rng=rng)
    # non-zero biases keep pre-activations off the ReLU kink at exactly 0
    for _, b in model.hidden:
        b[...] = rng.normal(scale=0.5, size=b.shape)
    model.expand_head(old, rng)
    if new:
        model.expand_head(new, rng)
    return model


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance summary -------------------------------------------------------

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, text): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when not in ("setup", "call"):
        return
    number, text = marker.args
    if report.when == "call" or report.failed:
        _CRITERIA[number] = (text, "PASS" if report.passed else "FAIL")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        text, status = _CRITERIA[number]
        terminalreporter.write_line(f"[{status}] criterion {number}: {text}")
