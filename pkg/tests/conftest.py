import numpy as np
import pytest

from hybrid_relay import build_rf_stage, draw_simple_channel, effective_channels, solver_config_for, trial_rng

# lines recorded by the acceptance suite, printed once at the end of the session
ACCEPTANCE_LINES = {}


def record_acceptance(number, passed, detail):
    ACCEPTANCE_LINES[number] = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[number])


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def random_psd(rng, n, rank=None):
    x = crandn(rng, n, rank or n)
    return x @ x.conj().T


def reference_instance(seed, snr_db=5.0, nt=64, nr=32, nd=48, ns=4, nrf=6, paths=20, **solver_kw):
    """Channels, RF stage, effective channels and solver settings at the reference dimensions (64/32/48)."""
    rng = trial_rng(seed)
    h1 = draw_simple_channel(nt, nr, paths, rng).h
    h2 = draw_simple_channel(nr, nd, paths, rng).h
    stage = build_rf_stage(h1, h2, nrf)
    eff = effective_channels(stage, h1, h2)
    cfg = solver_config_for(float(ns), float(ns), snr_db, **solver_kw)
    return h1, h2, stage, eff, cfg


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
