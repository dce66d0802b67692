import numpy as np
import pytest

from mgar_topopt.model import ThermalModel, dirichlet_from_preset


def make_model(nel=(8, 8), source=1e-4, preset="auto", **kw):
    nel = tuple(nel)
    n_elem = int(np.prod(nel))
    src = np.full(n_elem, source) if np.isscalar(source) else np.asarray(source)
    return ThermalModel(dim=len(nel), nel=nel, source=src,
                        dirichlet=dirichlet_from_preset(preset, nel), **kw)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
