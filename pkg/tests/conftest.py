import math

import numpy as np
import pytest

from afcshaper.comb import CombSpec, ShapeKind, build_comb
from afcshaper.config import resolve
from afcshaper.dynamics import MemoryParams

TWO_PI = 2 * math.pi


@pytest.fixture(scope="session")
def pr_yso_spec():
    return CombSpec(ShapeKind("rectangular", TWO_PI * 4e6), ShapeKind("gaussian", TWO_PI * 1e3), 67)


@pytest.fixture(scope="session")
def dirac_spec():
    return CombSpec(ShapeKind("rectangular", TWO_PI * 4e6), ShapeKind("dirac", 0.0), 67)


@pytest.fixture(scope="session")
def pr_yso_params(pr_yso_spec):
    return MemoryParams(TWO_PI * 55e6, TWO_PI * 8.4e6, build_comb(pr_yso_spec))


@pytest.fixture(scope="session")
def small_spec():
    # a coarse comb that keeps the step size large for quick invariant checks
    return CombSpec(ShapeKind("rectangular", TWO_PI * 4e6), ShapeKind("dirac", 0.0), 9)


@pytest.fixture(scope="session")
def default_cfg():
    return resolve({})


@pytest.fixture(scope="session")
def shaping_runs(default_cfg):
    """The three shaping panels with the default configuration (shared, slow)."""
    from afcshaper.scenarios import run_shaping_panel

    return {p: run_shaping_panel(p, default_cfg) for p in "abc"}


@pytest.fixture(scope="session")
def ion_hom_run(default_cfg, shaping_runs):
    from afcshaper.scenarios import ProvenanceWarning, run_ion_hom

    with pytest.warns(ProvenanceWarning):
        return run_ion_hom(default_cfg, panels=shaping_runs)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


class AcceptanceLog:
    def __init__(self):
        self.lines = {}

    def record(self, number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        self.lines[number] = line
        print(line)
        return ok


@pytest.fixture(scope="session")
def acceptance(request):
    log = AcceptanceLog()
    request.config._acceptance_log = log
    return log


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    log = getattr(config, "_acceptance_log", None)
    if log is None or not log.lines:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(log.lines):
        terminalreporter.write_line(log.lines[number])
