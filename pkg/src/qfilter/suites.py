"""Verification suites behind the `verify` CLI command.

Each suite runs a self-contained numerical check of one advertised property
on the configured model and returns a machine-readable report:

  {"suite": name, "passed": bool,
   "checks": [{"name", "measured", "bound": [lo, hi], "pass"}, ...],
   "stats": {...}}

plus an optional (header, rows) series for a companion CSV. Bounds use null
for an open side. Per-suite knobs come from the config's "verify" section;
protocol constants that define a property (thresholds, checkpoint counts)
are fixed here on purpose, so a config cannot quietly weaken a suite.
"""

from __future__ import annotations

import dataclasses
import math
from itertools import combinations

import numpy as np

from .analysis import (
    collapse_statistics,
    ensemble_vs_master,
    fidelity,
    filtering_residual,
    pure_state_trace_distance,
    strong_order_estimate,
)
from .config import RunConfig, build_initial, build_model
from .errors import ConfigError
from .linalg import StateVector, projector
from .models import build_qubit_model, named_observable
from .noise import coarsen_record
from .output import format_float
from .solvers import run_ensemble, run_trajectory, solve_master, solve_unitary

_DEPHASING_T = 0.5
_DEPHASING_DT = 1e-3


def _check(name: str, measured: float, lo, hi) -> dict:
    ok = bool(np.isfinite(measured)) \
        and (lo is None or measured >= lo) and (hi is None or measured <= hi)
    return {"name": name, "measured": float(measured), "bound": [lo, hi], "pass": ok}


def _report(suite: str, checks: list[dict], stats: dict | None = None) -> dict:
    doc = {"suite": suite, "passed": all(c["pass"] for c in checks), "checks": checks}
    if stats:
        doc["stats"] = stats
    return doc


def _knobs(cfg: RunConfig, suite: str, allowed: dict) -> dict:
    """Merge config knobs over defaults; unknown or mistyped knobs fail."""
    given = cfg.verify.get(suite, {})
    problems = [(f"verify.{suite}.{k}", "unknown knob") for k in given if k not in allowed]
    if problems:
        raise ConfigError(problems)
    out = dict(allowed)
    out.update(given)
    return out


def _int_knob(value, path: str, minimum: int) -> int:
    if not isinstance(value, int) or isinstance(value, bool) or value < minimum:
        raise ConfigError([(path, f"must be an integer of at least {minimum}")])
    return value


def _dts_knob(value, path: str):
    if not isinstance(value, (list, tuple)) or len(value) < 4 \
            or not all(isinstance(v, (int, float)) and not isinstance(v, bool) and v > 0
                       for v in value):
        raise ConfigError([(path, "must list at least four positive dt values")])
    dts = np.sort(np.asarray(value, dtype=float))[::-1]
    ratios = dts[:-1] / dts[1:]
    if not np.allclose(ratios, ratios[0], rtol=1e-9):
        raise ConfigError([(path, "dt values must form a geometric sequence")])
    return dts


def suite_equivalence(cfg: RunConfig):
    """One measurement record, three schemes: pathwise agreement at the run
    dt and at dt/2, the shrink factor between the two, the record-driven
    amplitude identity, and the closed-system limit.

    The record is produced by the nonlinear scheme at dt/2 driving fresh
    noise; the other schemes replay it, and the coarse runs replay the same
    record with adjacent increments merged. Comparing schemes on a shared
    record is what the pathwise equivalence asserts; feeding each scheme its
    own innovations would compare solutions of different records.
    """
    knobs = _knobs(cfg, "equivalence", {"n_seeds": 20, "checkpoints": 10})
    n_seeds = _int_knob(knobs["n_seeds"], "verify.equivalence.n_seeds", 1)
    n_checks = _int_knob(knobs["checkpoints"], "verify.equivalence.checkpoints", 1)

    model = build_model(cfg)
    initial = build_initial(cfg, model)
    dt = cfg.sim.dt
    n = cfg.n_steps
    seed = cfg.ensemble.master_seed
    scheme_names = ("nonlinear", "linear", "gauge")
    stride = max(1, n // n_checks)

    max_td = 0.0
    max_td_half = 0.0
    amp_max = 0.0
    td_by_time: dict[float, float] = {}
    td_half_by_time: dict[float, float] = {}
    for i in range(n_seeds):
        fine = run_trajectory(model, initial, dt / 2.0, 2 * n, seed, i,
                              scheme="nonlinear", record_stride=2 * stride,
                              keep_noise=False)
        runs_half = {"nonlinear": fine}
        for s in ("linear", "gauge"):
            runs_half[s] = run_trajectory(model, initial, dt / 2.0, 2 * n, seed, i,
                                          scheme=s, record_stride=2 * stride,
                                          record=fine.record, keep_noise=False)
        coarse_rec = coarsen_record(fine.record, 2)
        runs = {s: run_trajectory(model, initial, dt, n, seed, i, scheme=s,
                                  record_stride=stride, record=coarse_rec,
                                  keep_noise=False)
                for s in scheme_names}
        times = runs["nonlinear"].times
        for idx in range(1, times.size):
            t = float(times[idx])
            d = max(pure_state_trace_distance(runs[a].states[idx], runs[b].states[idx])
                    for a, b in combinations(scheme_names, 2))
            dh = max(pure_state_trace_distance(runs_half[a].states[idx],
                                               runs_half[b].states[idx])
                     for a, b in combinations(scheme_names, 2))
            td_by_time[t] = max(td_by_time.get(t, 0.0), d)
            td_half_by_time[t] = max(td_half_by_time.get(t, 0.0), dh)
            max_td = max(max_td, d)
            max_td_half = max(max_td_half, dh)
        ln_ref = float(runs["linear"].log_norm[-1])
        for s in scheme_names:
            gap = abs(math.exp(float(runs[s].log_amplitude[-1]) - ln_ref) - 1.0)
            amp_max = max(amp_max, gap)

    shrink = max_td / max_td_half if max_td_half > 0 else math.inf

    free_cfg = dataclasses.replace(cfg, constants_lambda=0.0)
    model0 = build_model(free_cfg)
    initial0 = build_initial(free_cfg, model0)
    run0 = run_trajectory(model0, initial0, dt, n, seed, 0, scheme="nonlinear",
                          record_stride=n, keep_noise=False)
    exact = solve_unitary(model0, initial0, cfg.sim.t_final)
    fid = fidelity(run0.states[-1], exact)

    checks = [
        _check("unitary_limit_fidelity", fid, 1.0 - 1e-4, None),
        _check("pairwise_distance_max", max_td, None, 1e-2),
        _check("refinement_shrink_factor", shrink, 1.5, 3.0),
        _check("amplitude_identity_max", amp_max, None, 5e-3),
    ]
    header = ["t", "max_distance", "max_distance_half_dt"]
    rows = [[format_float(t), format_float(td_by_time[t]), format_float(td_half_by_time[t])]
            for t in sorted(td_by_time)]
    return _report("equivalence", checks,
                   {"n_seeds": n_seeds, "dt": dt}), (header, rows)


def suite_ensemble(cfg: RunConfig):
    """Trajectory average against the averaged-equation solution, plus a
    closed-form decay self-check of the averaged integrator."""
    knobs = _knobs(cfg, "ensemble", {"checkpoints": 10})
    n_checks = _int_knob(knobs["checkpoints"], "verify.ensemble.checkpoints", 1)

    model = build_model(cfg)
    initial = build_initial(cfg, model)
    dt = cfg.sim.dt
    n = cfg.n_steps
    stride = max(1, n // n_checks)
    results = run_ensemble(model, initial, dt, n, cfg.ensemble.master_seed,
                           cfg.ensemble.n_trajectories, scheme=cfg.sim.scheme,
                           record_stride=stride, slim=True)
    dtraj = solve_master(model, projector(initial), dt, n, store_stride=stride)
    rep = ensemble_vs_master(results, dtraj, times=results[0].times[1:])

    deph = build_qubit_model((0.0, 0.0, 0.0), channel="sigma_z", lam=1.0)
    sup = StateVector(deph.basis, np.array([1.0, 1.0], dtype=complex) / np.sqrt(2.0))
    dd = solve_master(deph, projector(sup), _DEPHASING_DT,
                      round(_DEPHASING_T / _DEPHASING_DT),
                      store_stride=round(_DEPHASING_T / _DEPHASING_DT))
    rho01 = dd.matrices[-1][0, 1]
    oracle_gap = abs(rho01 - 0.5 * math.exp(-4.0 * _DEPHASING_T))

    checks = [
        _check("mean_vs_master_max_distance", rep.max_distance, None, 0.05),
        _check("dephasing_decay_gap", float(oracle_gap), None, 1e-6),
    ]
    header = ["t", "trace_distance"]
    rows = [[format_float(t), format_float(d)]
            for t, d in zip(rep.times, rep.trace_distances)]
    return _report("ensemble", checks,
                   {"n_trajectories": cfg.ensemble.n_trajectories, "dt": dt}), (header, rows)


def suite_born(cfg: RunConfig):
    """Outcome frequencies of resolved trajectories against the initial
    weights, the unresolved fraction, and the mean-expectation martingale."""
    knobs = _knobs(cfg, "born", {"observable": None, "threshold": 0.01})
    threshold = knobs["threshold"]
    if not isinstance(threshold, (int, float)) or not 0 < threshold < 1:
        raise ConfigError([("verify.born.threshold", "must lie in (0, 1)")])

    model = build_model(cfg)
    initial = build_initial(cfg, model)
    obs_name = knobs["observable"]
    if obs_name is None:
        obs_name = "sigma_z" if model.basis.grid is None else "x"
    if not isinstance(obs_name, str):
        raise ConfigError([("verify.born.observable", "must be a name")])
    try:
        obs = named_observable(model, obs_name)
    except ValueError as exc:
        raise ConfigError([("verify.born.observable", str(exc))]) from None

    dt = cfg.sim.dt
    n = cfg.n_steps
    stride = max(1, n // 50)
    results = run_ensemble(model, initial, dt, n, cfg.ensemble.master_seed,
                           cfg.ensemble.n_trajectories, scheme=cfg.sim.scheme,
                           observables={obs_name: obs}, record_stride=stride, slim=True)
    stats = collapse_statistics(results, obs, threshold=float(threshold))

    nn = stats.n_trajectories
    p_top = float(stats.born_probabilities[-1])
    ci = 3.0 * math.sqrt(max(p_top * (1.0 - p_top), 1e-300) / nn)
    freq_top = float(stats.frequencies[-1])

    series = np.stack([r.expectations[obs_name].real for r in results])
    mean_t = series.mean(axis=0)
    se_t = series.std(axis=0, ddof=1) / math.sqrt(nn) if nn > 1 else np.full_like(mean_t, np.inf)
    dev = np.abs(mean_t - stats.expectation_initial)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(dev == 0.0, 0.0, dev / (3.0 * se_t))
    martingale_ratio = float(np.nanmax(ratio[1:])) if ratio.size > 1 else 0.0

    checks = [
        _check("top_outcome_frequency", freq_top, p_top - ci, p_top + ci),
        _check("unresolved_fraction", stats.unresolved_fraction, None, 0.02),
        _check("martingale_deviation_over_3se", martingale_ratio, None, 1.0),
    ]
    header = ["eigenvalue", "count", "frequency", "initial_weight"]
    rows = [[format_float(stats.eigenvalues[i]), str(int(stats.counts[i])),
             format_float(stats.frequencies[i]), format_float(stats.born_probabilities[i])]
            for i in range(stats.eigenvalues.size)]
    return _report("born", checks, {
        "chi_square_p": stats.chi_square_p,
        "n_trajectories": nn,
        "expectation_final_mean": stats.expectation_final_mean,
        "expectation_final_se": stats.expectation_final_se,
    }), (header, rows)


# Strong-order benchmark: a channel with a trace. For any traceless qubit
# channel the squared channel is a multiple of the identity, the step's
# missing quadratic-variation term is then a scalar, and normalized states
# converge at order 1 instead of the generic 1/2. Weak coupling keeps the
# trajectory away from full collapse, where error statistics degenerate.
_ORDER_CHANNEL = np.array([[1.5, 0.0], [0.0, -0.5]], dtype=complex)
_ORDER_LAMBDA = 0.25
_ORDER_T = 1.0


def suite_order(cfg: RunConfig):
    """Strong convergence slope on common-refinement paths, both stochastic
    schemes, measured on a fixed benchmark model where the generic rate is
    visible (see _ORDER_CHANNEL)."""
    knobs = _knobs(cfg, "order", {
        "dts": [8e-3, 4e-3, 2e-3, 1e-3], "n_seeds": 32, "ref_refine": 64})
    dts = _dts_knob(knobs["dts"], "verify.order.dts")
    n_seeds = _int_knob(knobs["n_seeds"], "verify.order.n_seeds", 2)
    refine = _int_knob(knobs["ref_refine"], "verify.order.ref_refine", 2)

    model = build_qubit_model((1.0, 0.0, 0.0), channel=_ORDER_CHANNEL,
                              lam=_ORDER_LAMBDA, hbar=cfg.constants_hbar)
    initial = StateVector(model.basis,
                          np.array([math.sqrt(0.7), math.sqrt(0.3)], dtype=complex))
    for dt in dts:
        if abs(round(_ORDER_T / dt) * dt - _ORDER_T) > 1e-9 * _ORDER_T:
            raise ConfigError([("verify.order.dts",
                                f"benchmark horizon {_ORDER_T} is not a multiple "
                                f"of dt={dt!r}")])

    reports = {}
    for scheme in ("nonlinear", "linear"):
        reports[scheme] = strong_order_estimate(
            model, initial, _ORDER_T, dts, cfg.ensemble.master_seed, n_seeds,
            scheme=scheme, ref_refine=refine)

    checks = [
        _check("slope_nonlinear", reports["nonlinear"].slope, 0.35, 0.65),
        _check("slope_linear", reports["linear"].slope, 0.35, 0.65),
    ]
    header = ["dt", "mean_error_nonlinear", "mean_error_linear"]
    rows = [[format_float(dts[i]),
             format_float(reports["nonlinear"].mean_errors[i]),
             format_float(reports["linear"].mean_errors[i])]
            for i in range(dts.size)]
    return _report("order", checks, {
        "n_seeds": n_seeds,
        "slope_se_nonlinear": reports["nonlinear"].slope_se,
        "slope_se_linear": reports["linear"].slope_se,
    }), (header, rows)


def suite_filtering(cfg: RunConfig):
    """Scaling of the per-step residual of the posterior-expectation
    equation as dt shrinks.

    The per-dt figure pools squared residuals across seeds before the root;
    the residual distribution has heavy tails near expectation extremes, so
    small-sample averages of per-run rms values make the fitted slope noisy.
    """
    knobs = _knobs(cfg, "filtering", {
        "dts": [1e-3, 5e-4, 2.5e-4, 1.25e-4], "n_seeds": 32,
        "observable": None, "include_quadratic_correction": True})
    dts = _dts_knob(knobs["dts"], "verify.filtering.dts")
    n_seeds = _int_knob(knobs["n_seeds"], "verify.filtering.n_seeds", 1)
    quad = knobs["include_quadratic_correction"]
    if not isinstance(quad, bool):
        raise ConfigError([("verify.filtering.include_quadratic_correction",
                            "must be a boolean")])

    model = build_model(cfg)
    initial = build_initial(cfg, model)
    obs_name = knobs["observable"]
    if obs_name is None:
        obs_name = "sigma_z" if model.basis.grid is None else "x"
    if not isinstance(obs_name, str):
        raise ConfigError([("verify.filtering.observable", "must be a name")])
    try:
        obs = named_observable(model, obs_name)
    except ValueError as exc:
        raise ConfigError([("verify.filtering.observable", str(exc))]) from None

    t_final = cfg.sim.t_final
    mean_rms = np.empty(dts.size)
    for d, dt in enumerate(dts):
        n = round(t_final / dt)
        if abs(n * dt - t_final) > 1e-9 * t_final:
            raise ConfigError([("verify.filtering.dts",
                                f"sim.t_final is not a multiple of dt={dt!r}")])
        acc = 0.0
        for s in range(n_seeds):
            traj = run_trajectory(model, initial, dt, n, cfg.ensemble.master_seed, s,
                                  scheme="nonlinear", record_stride=1, keep_noise=True)
            acc += filtering_residual(traj, obs,
                                      include_quadratic_correction=quad).rms ** 2
        mean_rms[d] = math.sqrt(acc / n_seeds)

    slope = float(np.polyfit(np.log(dts), np.log(np.maximum(mean_rms, 1e-300)), 1)[0])
    checks = [_check("residual_rms_slope", slope, 1.3, 1.7)]
    header = ["dt", "pooled_rms_residual"]
    rows = [[format_float(dts[i]), format_float(mean_rms[i])] for i in range(dts.size)]
    return _report("filtering", checks, {
        "n_seeds": n_seeds,
        "include_quadratic_correction": quad,
    }), (header, rows)


def suite_gauge(cfg: RunConfig):
    """Deterministic gauge integration replaying a stochastic run's record,
    checked through the overflow-safe reconstruction, in state and in
    amplitude."""
    knobs = _knobs(cfg, "gauge", {"n_seeds": 5, "checkpoints": 10})
    n_seeds = _int_knob(knobs["n_seeds"], "verify.gauge.n_seeds", 1)
    n_checks = _int_knob(knobs["checkpoints"], "verify.gauge.checkpoints", 1)

    model = build_model(cfg)
    initial = build_initial(cfg, model)
    dt = cfg.sim.dt
    n = cfg.n_steps
    seed = cfg.ensemble.master_seed
    stride = max(1, n // n_checks)

    max_td = 0.0
    amp_max = 0.0
    ln_c_gap = 0.0
    td_rows: dict[float, float] = {}
    for i in range(n_seeds):
        lin = run_trajectory(model, initial, dt, n, seed, i, scheme="linear",
                             record_stride=stride, keep_noise=False)
        gau = run_trajectory(model, initial, dt, n, seed, i, scheme="gauge",
                             record_stride=stride, record=lin.record,
                             keep_noise=False)
        for idx in range(1, lin.times.size):
            d = pure_state_trace_distance(lin.states[idx], gau.states[idx])
            t = float(lin.times[idx])
            td_rows[t] = max(td_rows.get(t, 0.0), d)
            max_td = max(max_td, d)
        gap = abs(math.exp(float(gau.log_amplitude[-1]) - float(lin.log_norm[-1])) - 1.0)
        amp_max = max(amp_max, gap)
        ln_c_gap = max(ln_c_gap, float(abs(gau.log_norm[-1] - lin.log_norm[-1])))

    checks = [
        _check("gauge_vs_linear_max_distance", max_td, None, 1e-2),
        _check("reconstructed_amplitude_identity", amp_max, None, 5e-3),
    ]
    header = ["t", "max_distance"]
    rows = [[format_float(t), format_float(td_rows[t])] for t in sorted(td_rows)]
    return _report("gauge", checks, {
        "n_seeds": n_seeds,
        "max_ln_c_gap": ln_c_gap,
    }), (header, rows)


SUITES = {
    "equivalence": suite_equivalence,
    "ensemble": suite_ensemble,
    "born": suite_born,
    "order": suite_order,
    "filtering": suite_filtering,
    "gauge": suite_gauge,
}


def run_suite(name: str, cfg: RunConfig):
    try:
        fn = SUITES[name]
    except KeyError:
        raise ConfigError([("--suite", f"unknown suite {name!r}; "
                            f"expected one of {sorted(SUITES)}")]) from None
    return fn(cfg)
