import warnings

import numpy as np
import pytest

from malalimit.mala import MalaConfig
from malalimit.spectral import make_covariance
from malalimit.target import sqrt_sobolev_target, zero_target

# one line per acceptance criterion, filled in by test_acceptance.py
CRITERIA_LINES = {}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def setup(N, kind="sqrt_sobolev", ell=1.0, zeta=0.5, seed=0, kappa=1.0, s=0.25):
    cov = make_covariance(kappa, s, N)
    model = zero_target() if kind == "zero" else sqrt_sobolev_target(cov.s)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        cfg = MalaConfig(ell, zeta, N, seed)
    return cov, model, cfg


def pytest_terminal_summary(terminalreporter):
    if CRITERIA_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(CRITERIA_LINES):
            terminalreporter.write_line(CRITERIA_LINES[k])
