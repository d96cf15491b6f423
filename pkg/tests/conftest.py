import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def rel_fro(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


_RUNS = {}


def harness_run(seed=42, **schedule_changes):
    """Full default-config harness run, cached per (seed, schedule) for the session."""
    from viewreg.harness import HarnessConfig, run_experiment

    key = (seed, tuple(sorted(schedule_changes.items())))
    if key not in _RUNS:
        _RUNS[key] = run_experiment(HarnessConfig().with_schedule(**schedule_changes), seed)[1]
    return _RUNS[key]


NO_SVO = dict(svo_initial=0.0, svo_final=0.0)
NO_SPD = dict(spd_base=0.0, spd_peak=0.0)


ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
