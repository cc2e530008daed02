import warnings
from pathlib import Path

import numpy as np
import pytest

from mhthfa.hthfa import FactorComponentParams, _a_matrix

DATA = Path(__file__).resolve().parent.parent / "data"


def admissible_component(rng, p, q, r, lam=None, omega=None, shift=0.0, lam_scale=1.0):
    """Random component whose A matrix is comfortably positive definite."""
    lam = float(rng.uniform(-1.5, 1.5)) if lam is None else lam
    omega = float(rng.uniform(0.8, 3.0)) if omega is None else omega
    L = rng.normal(size=(q, r)) * lam_scale
    while np.linalg.eigvalsh(_a_matrix(L, lam, omega)[0])[0] < 0.3:
        L = 0.7 * L
    return FactorComponentParams(
        mu=shift + rng.normal(size=p) * 0.5,
        B=rng.normal(size=(p, q)) * 0.7,
        D=rng.uniform(0.3, 0.8, size=p),
        Lam=L,
        omega=omega,
        lam=lam,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture(autouse=True)
def _quiet_runtime_warnings():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        yield


CRITERIA = {}


def record_criterion(number, title, passed, detail):
    """Keep one summary line per acceptance criterion for the terminal report."""
    CRITERIA[number] = f"criterion {number} [{'PASS' if passed else 'FAIL'}] {title}: {detail}"


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for number in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[number])
