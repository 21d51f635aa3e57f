import numpy as np
import pytest

from expdnn.experiment import case_spec


@pytest.fixture
def np_rng():
    return np.random.default_rng(20240501)


@pytest.fixture
def case_setup():
    def make(case_id, seed=0, epochs=60_000):
        cfg = case_spec(case_id).experiment(seed, epochs)
        return cfg, cfg.prepare()

    return make


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance_record():
    def record(number, passed, detail):
        ACCEPTANCE_LINES.append(f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
