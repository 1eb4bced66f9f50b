"""Trajectory statistics: fidelities, ensemble checks, residuals, convergence."""

from __future__ import annotations

import math

import numpy as np
import pytest

import qfilter as qf
from qfilter import (
    Basis,
    GridSpec,
    Operator,
    StateVector,
    amplitude_identity_error,
    build_grid_model,
    build_qubit_model,
    collapse_statistics,
    ensemble_average,
    ensemble_vs_master,
    fidelity,
    filtering_residual,
    gaussian_packet,
    localization_metrics,
    named_observable,
    projector,
    pure_state_trace_distance,
    run_ensemble,
    run_trajectory,
    solve_master,
    strong_order_estimate,
    time_average,
    trace_distance,
    variance_series,
)
from qfilter.errors import BasisMismatchError, UnsupportedConfigurationError

B2 = Basis.finite(2)


def _ket(c0, c1):
    return StateVector(B2, np.array([c0, c1], dtype=complex))


KET0 = _ket(1.0, 0.0)
KET1 = _ket(0.0, 1.0)
PLUS = _ket(1.0 / math.sqrt(2.0), 1.0 / math.sqrt(2.0))


def test_fidelity_basics():
    assert fidelity(KET0, KET0) == pytest.approx(1.0, abs=1e-15)
    assert fidelity(KET0, KET1) == pytest.approx(0.0, abs=1e-15)
    assert fidelity(KET0, PLUS) == pytest.approx(0.5, abs=1e-14)
    assert fidelity(KET0, PLUS) == pytest.approx(fidelity(PLUS, KET0), abs=1e-15)


def test_pure_trace_distance_consistency():
    rng = np.random.default_rng(19)
    for _ in range(5):
        a = StateVector(B2, rng.standard_normal(2) + 1j * rng.standard_normal(2)).normalized()
        b = StateVector(B2, rng.standard_normal(2) + 1j * rng.standard_normal(2)).normalized()
        d = pure_state_trace_distance(a, b)
        assert d == pytest.approx(math.sqrt(max(0.0, 1.0 - fidelity(a, b))), abs=1e-12)
        assert d == pytest.approx(trace_distance(projector(a), projector(b)), abs=1e-10)


def test_linear_and_nonlinear_schemes_share_the_factored_path():
    """Same record, same factored state: the two forms are one integrator."""
    model = build_qubit_model((1.0, 0.0, 0.0), channel="sigma_z", lam=1.0)
    nl = run_trajectory(model, KET0, 1e-3, 300, 8, 0, scheme="nonlinear")
    lin = run_trajectory(model, KET0, 1e-3, 300, 8, 0, scheme="linear")
    assert np.array_equal(nl.states[-1].amplitudes, lin.states[-1].amplitudes)
    assert np.array_equal(nl.log_norm, lin.log_norm)


def test_amplitude_identity_exact_for_record_driven_schemes():
    model = build_qubit_model((1.0, 0.0, 0.0), channel="sigma_z", lam=1.0)
    for scheme in ("nonlinear", "linear"):
        traj = run_trajectory(model, KET0, 1e-3, 200, 6, 0, scheme=scheme,
                              record_stride=20)
        assert np.abs(amplitude_identity_error(traj)).max() < 1e-15


def test_amplitude_identity_small_for_gauge_scheme():
    model = build_qubit_model((1.0, 0.0, 0.0), channel="sigma_z", lam=1.0)
    traj = run_trajectory(model, KET0, 1e-3, 500, 2, 0, scheme="gauge",
                          record_stride=50)
    err = np.abs(amplitude_identity_error(traj)).max()
    assert err < 0.05, f"gauge amplitude identity gap {err:.3e}"


def test_ensemble_average_at_time_zero():
    model = build_qubit_model((0.0, 0.0, 0.0), channel="sigma_z", lam=1.0)
    runs = run_ensemble(model, _ket(0.6, 0.8), 1e-3, 20, 4, 3, workers=1)
    summary = ensemble_average(runs)
    assert summary.n_trajectories == 3
    rho0 = qf.DensityMatrix(B2, summary.mean_density[0])
    assert trace_distance(rho0, projector(_ket(0.6, 0.8))) < 1e-12


def test_ensemble_average_rejects_mixed_grids():
    model = build_qubit_model((0.0, 0.0, 0.0), channel="sigma_z", lam=1.0)
    a = run_trajectory(model, KET0, 1e-3, 20, 4, 0, record_stride=5)
    b = run_trajectory(model, KET0, 1e-3, 20, 4, 1, record_stride=4)
    with pytest.raises(ValueError, match="snapshot"):
        ensemble_average([a, b])
    c = run_trajectory(model, KET0, 2e-3, 10, 4, 1, record_stride=5)
    with pytest.raises(ValueError):
        ensemble_average([a, c])
    grid_model = build_grid_model(GridSpec(-10.0, 10.0, 32), lam=1.0)
    g = run_trajectory(grid_model, gaussian_packet(grid_model.basis), 1e-3, 20, 4, 0,
                       record_stride=5)
    with pytest.raises(BasisMismatchError):
        ensemble_average([a, g])
    with pytest.raises(ValueError):
        ensemble_average([])


def test_ensemble_mean_tracks_averaged_equation():
    model = build_qubit_model((1.0, 0.0, 0.0), channel="sigma_z", lam=1.0)
    runs = run_ensemble(model, KET0, 1e-3, 500, 13, 200, record_stride=50, slim=True)
    master = solve_master(model, projector(KET0), 1e-3, 500, store_stride=50)
    report = ensemble_vs_master(runs, master)
    assert report.times.size == 11
    assert report.max_distance == pytest.approx(report.trace_distances.max())
    assert report.max_distance <= 0.05, (
        f"200-run mean strays {report.max_distance:.4f} from the averaged equation"
    )


def test_ensemble_vs_master_basis_mismatch():
    model = build_qubit_model((0.0, 0.0, 0.0), channel="sigma_z", lam=1.0)
    runs = run_ensemble(model, KET0, 1e-3, 10, 4, 2, workers=1)
    grid_model = build_grid_model(GridSpec(-10.0, 10.0, 16), lam=1.0)
    rho0 = projector(gaussian_packet(grid_model.basis))
    master = solve_master(grid_model, rho0, 1e-3, 10)
    with pytest.raises(BasisMismatchError):
        ensemble_vs_master(runs, master)


def test_collapse_statistics_symmetric_superposition():
    model = build_qubit_model((0.0, 0.0, 0.0), channel="sigma_z", lam=1.0)
    runs = run_ensemble(model, PLUS, 1e-3, 5000, 42, 300, record_stride=100, slim=True)
    sz = named_observable(model, "sigma_z")
    report = collapse_statistics(runs, sz)
    assert np.allclose(report.eigenvalues, [-1.0, 1.0], atol=1e-12)
    assert np.allclose(report.born_probabilities, [0.5, 0.5], atol=1e-12)
    assert report.n_trajectories == 300
    assert report.unresolved_fraction == 0.0
    assert int(report.counts.sum()) == 300
    bound = 3.0 * math.sqrt(0.25 / 300)
    for freq in report.frequencies:
        assert abs(freq - 0.5) <= bound, f"outcome frequency {freq:.3f} off Born weight"
    assert report.chi_square_p > 1e-3
    assert report.expectation_initial == pytest.approx(0.0, abs=1e-12)
    drift = abs(report.expectation_final_mean - report.expectation_initial)
    assert drift <= 3.0 * report.expectation_final_se


def test_collapse_statistics_before_collapse_completes():
    model = build_qubit_model((0.0, 0.0, 0.0), channel="sigma_z", lam=1.0)
    runs = run_ensemble(model, PLUS, 1e-3, 200, 42, 60, record_stride=50, slim=True)
    report = collapse_statistics(runs, named_observable(model, "sigma_z"))
    assert report.unresolved_fraction > 0.5


def test_collapse_statistics_validation():
    model = build_qubit_model((0.0, 0.0, 0.0), channel="sigma_z", lam=1.0)
    runs = run_ensemble(model, PLUS, 1e-3, 10, 4, 2, workers=1)
    with pytest.raises(UnsupportedConfigurationError, match="degenerate"):
        collapse_statistics(runs, named_observable(model, "identity"))
    raiser = Operator.from_matrix(B2, [[0.0, 1.0], [0.0, 0.0]])
    with pytest.raises(UnsupportedConfigurationError, match="hermitian"):
        collapse_statistics(runs, raiser)
    with pytest.raises(ValueError):
        collapse_statistics([], named_observable(model, "sigma_z"))
    grid_model = build_grid_model(GridSpec(-10.0, 10.0, 16), lam=1.0)
    with pytest.raises(BasisMismatchError):
        collapse_statistics(runs, named_observable(grid_model, "x"))


def test_variance_series_and_time_average():
    model = build_grid_model(GridSpec(-10.0, 10.0, 64), lam=0.0)
    obs = {k: named_observable(model, k) for k in ("x", "x2")}
    traj = run_trajectory(model, gaussian_packet(model.basis, sigma=1.0),
                          1e-3, 100, 3, 0, observables=obs, record_stride=10)
    var = variance_series(traj)
    assert var.shape == traj.times.shape
    assert np.all(var > 0.0)
    with pytest.raises(ValueError, match="did not store"):
        variance_series(traj, mean_name="p", square_name="x2")

    times = np.linspace(0.0, 1.0, 11)
    series = 2.0 * times
    assert time_average(series, times, 0.0, 1.0) == pytest.approx(1.0, rel=1e-12)
    with pytest.raises(ValueError):
        time_average(series, times, 0.8, 0.2)
    with pytest.raises(ValueError):
        time_average(series, times, 0.31, 0.39)


def test_localization_metrics():
    model = build_grid_model(GridSpec(-10.0, 10.0, 64), lam=0.0)
    obs = {k: named_observable(model, k) for k in ("x", "x2", "p")}
    traj = run_trajectory(model, gaussian_packet(model.basis, sigma=1.0, p0=0.5),
                          1e-3, 100, 3, 0, observables=obs, record_stride=10)
    series = localization_metrics(traj)
    assert series.times.shape == series.mean_x.shape == series.var_x.shape
    assert np.allclose(series.var_x, variance_series(traj), atol=1e-15)
    assert series.mean_p[0] == pytest.approx(0.5, abs=1e-2)

    qubit = build_qubit_model((0.0, 0.0, 0.0), channel="sigma_z", lam=1.0)
    qrun = run_trajectory(qubit, KET0, 1e-3, 10, 3, 0)
    with pytest.raises(UnsupportedConfigurationError):
        localization_metrics(qrun)
    partial = run_trajectory(model, gaussian_packet(model.basis), 1e-3, 10, 3, 0,
                             observables={"x": obs["x"], "x2": obs["x2"]})
    with pytest.raises(ValueError, match="did not store"):
        localization_metrics(partial)


def test_filtering_residual_closed_static_case_is_exact():
    model = build_qubit_model((0.0, 0.0, 0.0), channel="sigma_z", lam=0.0)
    traj = run_trajectory(model, _ket(0.6, 0.8), 1e-3, 100, 9, 0, record_stride=1)
    report = filtering_residual(traj, named_observable(model, "sigma_z"))
    assert report.max_abs == 0.0


def test_filtering_residual_closed_dynamic_case_is_second_order():
    # no observation noise: the residual is pure integrator bias, O(dt^2) per step
    model = build_qubit_model((2.0, 0.0, 0.0), channel="sigma_z", lam=0.0)
    sz = named_observable(model, "sigma_z")
    coarse = run_trajectory(model, KET0, 1e-3, 200, 11, 0, record_stride=1)
    fine = run_trajectory(model, KET0, 5e-4, 400, 11, 0, record_stride=1)
    ratio = filtering_residual(fine, sz).rms / filtering_residual(coarse, sz).rms
    assert 0.2 < ratio < 0.3, f"halving dt gave residual ratio {ratio:.4f}, want ~0.25"


def test_filtering_residual_observed_case():
    model = build_qubit_model((1.0, 0.0, 0.0), channel="sigma_z", lam=1.0)
    sz = named_observable(model, "sigma_z")
    traj = run_trajectory(model, KET0, 1e-4, 10000, 5, 0, record_stride=1)
    report = filtering_residual(traj, sz)
    assert report.rms <= 1e-5, f"residual rms {report.rms:.3e} above 10*dt^1.5"
    assert abs(report.mean) <= 3.0 * report.rms / math.sqrt(report.n_steps)
    raw = filtering_residual(traj, sz, include_quadratic_correction=False)
    assert raw.rms > 5.0 * report.rms, (
        f"quadratic correction only bought a factor {raw.rms / report.rms:.1f}"
    )


def test_filtering_residual_validation():
    model = build_qubit_model((1.0, 0.0, 0.0), channel="sigma_z", lam=1.0)
    sz = named_observable(model, "sigma_z")
    strided = run_trajectory(model, KET0, 1e-3, 20, 5, 0, record_stride=2)
    with pytest.raises(ValueError):
        filtering_residual(strided, sz)
    slim = run_trajectory(model, KET0, 1e-3, 20, 5, 0, record_stride=1,
                          keep_noise=False)
    with pytest.raises(ValueError):
        filtering_residual(slim, sz)
    full = run_trajectory(model, KET0, 1e-3, 20, 5, 0, record_stride=1)
    raiser = Operator.from_matrix(B2, [[0.0, 1.0], [0.0, 0.0]])
    with pytest.raises(UnsupportedConfigurationError):
        filtering_residual(full, raiser)
    grid_model = build_grid_model(GridSpec(-10.0, 10.0, 16), lam=1.0)
    with pytest.raises(BasisMismatchError):
        filtering_residual(full, named_observable(grid_model, "x"))


def test_strong_order_estimate_structure_and_validation():
    model = build_qubit_model((1.0, 0.0, 0.0), channel="sigma_z", lam=1.0)
    dts = [8e-3, 4e-3, 2e-3, 1e-3]
    report = strong_order_estimate(model, KET0, 0.2, dts, 7, 2, ref_refine=4)
    assert np.all(np.diff(report.dts) < 0)
    assert report.mean_errors.shape == (4,)
    assert np.all(report.mean_errors > 0.0)
    assert report.per_seed_slopes.shape == (2,)
    assert np.isfinite(report.slope)
    assert report.slope_se >= 0.0

    with pytest.raises(ValueError, match="four"):
        strong_order_estimate(model, KET0, 0.2, [8e-3, 4e-3, 2e-3], 7, 2)
    with pytest.raises(ValueError, match="geometric"):
        strong_order_estimate(model, KET0, 0.2, [8e-3, 4e-3, 2e-3, 1.5e-3], 7, 2)
    with pytest.raises(ValueError, match="seeds"):
        strong_order_estimate(model, KET0, 0.2, dts, 7, 1)
    with pytest.raises(ValueError, match="multiple"):
        strong_order_estimate(model, KET0, 0.0123, dts, 7, 2, ref_refine=8)
