"""Shared fixtures for the test battery.

The verification suites dominate the runtime, so each one runs once per
session at its frozen configuration and the resulting report is shared
between the structural tests and the acceptance gate. Fixture bodies are
wrapped so a crashed suite surfaces as a FAIL line in the acceptance
summary instead of silently dropping its criteria.
"""

from __future__ import annotations

import numpy as np
import pytest

import qfilter as qf

ACCEPT_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPT_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPT_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def accept_log():
    return ACCEPT_LINES


def _safe(fn):
    try:
        return fn()
    except Exception as exc:  # noqa: BLE001 - the gate reports FAIL, then re-raises
        return exc


@pytest.fixture(scope="session")
def equivalence_run():
    """Equivalence suite: qubit, x-axis field, full observation, dt=1e-4."""
    cfg = qf.parse_config_data({
        "model": {"kind": "qubit", "h_field": [1.0, 0.0, 0.0], "channel": "sigma_z"},
        "constants": {"hbar": 1.0, "lambda": 1.0},
        "initial": {"amplitudes": [1.0, 0.0]},
        "sim": {"dt": 1e-4, "t_final": 1.0},
        "ensemble": {"master_seed": 2026},
    })
    return _safe(lambda: qf.run_suite("equivalence", cfg))


@pytest.fixture(scope="session")
def ensemble_run():
    cfg = qf.parse_config_data({
        "model": {"kind": "qubit", "h_field": [1.0, 0.0, 0.0], "channel": "sigma_z"},
        "constants": {"lambda": 1.0},
        "initial": {"amplitudes": [1.0, 0.0]},
        "sim": {"dt": 1e-3, "t_final": 1.0},
        "ensemble": {"n_trajectories": 2000, "master_seed": 2026},
    })
    return _safe(lambda: qf.run_suite("ensemble", cfg))


@pytest.fixture(scope="session")
def born_run():
    # amplitudes are sqrt(0.7), sqrt(0.3)
    cfg = qf.parse_config_data({
        "model": {"kind": "qubit", "h_field": [0.0, 0.0, 0.0], "channel": "sigma_z"},
        "initial": {"amplitudes": [0.8366600265340756, 0.5477225575051661]},
        "sim": {"dt": 1e-3, "t_final": 5.0},
        "ensemble": {"n_trajectories": 2000, "master_seed": 7},
    })
    return _safe(lambda: qf.run_suite("born", cfg))


@pytest.fixture(scope="session")
def order_run():
    # the suite pins its own benchmark model; the config only needs to be valid
    cfg = qf.parse_config_data({
        "model": {"kind": "qubit"},
        "sim": {"dt": 1e-3, "t_final": 1.0},
        "ensemble": {"master_seed": 2026},
    })
    return _safe(lambda: qf.run_suite("order", cfg))


@pytest.fixture(scope="session")
def filtering_run():
    cfg = qf.parse_config_data({
        "model": {"kind": "qubit", "h_field": [1.0, 0.0, 0.0], "channel": "sigma_z"},
        "constants": {"lambda": 1.0},
        "initial": {"amplitudes": [1.0, 0.0]},
        "sim": {"dt": 1e-3, "t_final": 1.0},
        "ensemble": {"master_seed": 2026},
    })
    return _safe(lambda: qf.run_suite("filtering", cfg))


@pytest.fixture(scope="session")
def localization_runs():
    """Free-particle grid trajectories, unobserved and observed, dt=1e-4."""

    def build():
        grid = qf.GridSpec(-20.0, 20.0, 512)
        out = {}
        for key, lam in (("free", 0.0), ("observed", 1.0)):
            model = qf.build_grid_model(grid, lam=lam)
            obs = {k: qf.named_observable(model, k) for k in ("x", "x2", "p")}
            initial = qf.gaussian_packet(model.basis, sigma=1.0)
            out[key] = qf.run_trajectory(model, initial, 1e-4, 20000, 2026, 0,
                                         observables=obs, record_stride=100,
                                         keep_noise=False)
        return out

    return _safe(build)
