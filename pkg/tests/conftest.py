import numpy as np
import pytest

from flow360.sphere import synthetic_texture


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def texture():
    return synthetic_texture(64, 128, seed=7)


def random_flow(rng, h, w, scale=5.0):
    return (rng.normal(size=(h, w, 2)) * scale).astype(np.float32)


def quantized_image(rng, h, w, c=3):
    return (rng.integers(0, 256, size=(h, w, c)) / 255.0).astype(np.float32)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance")
        for line in RESULTS:
            terminalreporter.write_line(line)
