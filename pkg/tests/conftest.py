import sys

import numpy as np
import pytest

from lorapl.models import ModelSpec
from lorapl.synth import SynthConfig, generate


@pytest.fixture(scope="session")
def truth():
    return ModelSpec.ldpl("truth", n=2.0, pl_d0=130.0, d0=1000.0, sigma=8.0)


@pytest.fixture(scope="session")
def noisy_campaign(truth):
    """50k samples, LDPL(2.0, 130 dB) with 8 dB shadowing, log-uniform 50 m to 13 km."""
    return generate(SynthConfig(truth, sigma_db=8.0, count=50_000, seed=1))


@pytest.fixture(scope="session")
def clean_campaign(truth):
    return generate(SynthConfig(truth, sigma_db=0.0, count=5_000, seed=2))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def noisy_table(noisy_campaign):
    from lorapl.pipeline import link_table
    return link_table(noisy_campaign.samples, noisy_campaign.gateways)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(results):
        terminalreporter.write_line(results[num])
