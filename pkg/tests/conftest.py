"""Shared fixtures and the acceptance-summary terminal hook."""

import numpy as np
import pytest

from polaron_effmass.config import load_config
from polaron_effmass.dispersion import FiberCache
from polaron_effmass.operators import FiberTemplate

# (index, label, passed, detail) rows registered by tests/test_acceptance.py
_ACCEPTANCE_ROWS = []


@pytest.fixture(scope="session")
def acceptance_recorder():
    def record(index: int, label: str, passed, detail: str = ""):
        _ACCEPTANCE_ROWS.append((int(index), label, bool(passed), detail))
    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE_ROWS:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for idx, label, ok, detail in sorted(_ACCEPTANCE_ROWS):
        status = "PASS" if ok else "FAIL"
        line = f"criterion {idx:2d} {status}: {label}"
        if detail:
            line += f" [{detail}]"
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def toy_cfg():
    return load_config("toy")


@pytest.fixture(scope="session")
def toy_template(toy_cfg):
    return FiberTemplate(toy_cfg.spec)


@pytest.fixture(scope="session")
def toy_cache(toy_template):
    return FiberCache(toy_template, tol=1e-9, seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(20260814)
