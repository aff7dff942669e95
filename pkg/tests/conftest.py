import numpy as np
import pytest
from hypothesis import settings

from sabr_heatkernel.geometry import SabrParams, rescale

# fixed example sequence so repeated runs see the same cases
settings.register_profile("repro", derandomize=True, deadline=None)
settings.load_profile("repro")


@pytest.fixture
def ref_params():
    """Reference SABR set used throughout: F0 = 4, 30% vol, beta .7."""
    return SabrParams(f0=4.0, alpha=0.3, beta=0.7, nu=0.4, rho=-0.5)


@pytest.fixture
def scaled(ref_params):
    return rescale(ref_params)


@pytest.fixture
def band_strikes():
    return np.linspace(2.5, 6.5, 9)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


_ACCEPTANCE = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = {}


@pytest.fixture
def criterion(request):
    """Record one acceptance verdict: ``criterion(n, ok, detail)``."""
    results = request.config.stash[_ACCEPTANCE]

    def record(n, ok, detail):
        line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        results[n] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(_ACCEPTANCE, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
