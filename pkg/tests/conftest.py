import dataclasses

import numpy as np
import pytest

from lrpcfs import pipeline
from lrpcfs.scenarios import static_line

ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE:
        terminalreporter.write_line(line)


@pytest.fixture
def report():
    """Record one PASS/FAIL line for the terminal summary (and print it)."""

    def _report(label, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  {label}: {detail}"
        ACCEPTANCE.append(line)
        print(line)
        return ok

    return _report


def small_static_config(seed=3, acquisition_s=2.0, n_stages=6):
    cfg = static_line(seed=seed, acquisition_s=acquisition_s, n_stages=n_stages)
    st = dataclasses.replace(cfg.stage, dither_period_s=acquisition_s)
    # a short dither period limits valid lags to ~ 8 ms; keep the analysis inside it
    an = dataclasses.replace(cfg.analysis, tau_max_s=5e-3, slice_tau_s=1e-4, slice_factor=30.0)
    return dataclasses.replace(cfg, stage=st, analysis=an)


@pytest.fixture(scope="session")
def small_run():
    """A short static-line run shared by io/cli/pcfs tests."""
    cfg = small_static_config()
    pf = pipeline.simulate(cfg)
    corr = pipeline.correlate(pf, cfg)
    return cfg, pf, corr


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
