import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "repo", max_examples=60, deadline=None, derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "repo"))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def small_market():
    """Three assets plus index, 600 days, two market regimes."""
    from mrsnts import synthetic

    return synthetic.demo_market(3, 600, seed=11)


@pytest.fixture(scope="session")
def small_model(small_market):
    from mrsnts.estimation import EstimationConfig, estimate

    panel, index, _ = small_market
    cfg = EstimationConfig(regimes=2, n_starts=3, min_window=500, seed=5)
    return estimate(panel, index, cfg)


_ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line per acceptance criterion and fail the test if it did not pass."""

    def record(number: int, title: str, ok: bool, detail: str) -> None:
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d}: {title} ({detail})"
        _ACCEPTANCE[number] = line
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[n])
