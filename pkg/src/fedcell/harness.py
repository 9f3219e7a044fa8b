"""Scenario generation, experiment orchestration and structured outputs.

This is the only module that knows about decibels: configs carry dB/dBm
values, scenarios carry SI.  Sweeps reuse the same per-run seeds across
sweep values and schemes (common random numbers), so trends along the swept
variable are not drowned in channel noise, and all outputs are
deterministic functions of (config, seed).
"""

import csv
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .fl_sim import (DaneConfig, LossModel, estimate_curvature, load_csv,
                     make_regression_pool, partition, run_dane)
from .model import (FlParams, InfeasibleError, NetworkScenario, SolveReport,
                    UserParams, derive_coefficients)
from .schemes import SchemeKind, scheme_min_time, solve_scheme

FLOAT_FMT = "%.17g"


def db_to_linear(db):
    return 10.0 ** (db / 10.0)


def linear_to_db(x):
    return 10.0 * math.log10(x)


def dbm_to_watt(dbm):
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watt_to_dbm(w):
    return 10.0 * math.log10(w) + 30.0


@dataclass(frozen=True)
class ScenarioConfig:
    """Cell setup in configuration units (distances in m, powers in dBm).

    Users land uniformly in a square cell with the base station at its
    center; channel gains follow the log-distance path loss (distance in
    km) with lognormal shadowing.
    """

    num_users: int = 50
    cell_side_m: float = 500.0
    pathloss_intercept_db: float = 128.1
    pathloss_slope_db: float = 37.6
    shadowing_sigma_db: float = 8.0
    noise_psd_dbm_hz: float = -174.0
    bandwidth_hz: float = 20e6
    upload_bits: float = 28.1e3
    kappa: float = 1e-28
    cycles_min: float = 1e4
    cycles_max: float = 3e4
    samples_per_user: int = 500
    p_max_dbm: float = 10.0
    f_max_hz: float = 2e9
    min_distance_m: float = 1.0
    seed: int = 0


def gen_scenario(config):
    """Draw one NetworkScenario from the configured distributions."""
    rng = np.random.default_rng(config.seed)
    half = config.cell_side_m / 2.0
    xy = rng.uniform(-half, half, size=(config.num_users, 2))
    dist_km = np.maximum(np.hypot(xy[:, 0], xy[:, 1]),
                         config.min_distance_m) / 1000.0
    shadow_db = rng.normal(0.0, config.shadowing_sigma_db, config.num_users)
    loss_db = (config.pathloss_intercept_db
               + config.pathloss_slope_db * np.log10(dist_km) + shadow_db)
    gains = 10.0 ** (-loss_db / 10.0)
    cycles = rng.uniform(config.cycles_min, config.cycles_max, config.num_users)

    p_max = dbm_to_watt(config.p_max_dbm)
    users = tuple(
        UserParams(gain=float(g), cycles_per_sample=float(c),
                   samples=config.samples_per_user,
                   f_max=config.f_max_hz, p_max=p_max)
        for g, c in zip(gains, cycles))
    return NetworkScenario(
        users=users,
        bandwidth=config.bandwidth_hz,
        noise_psd=dbm_to_watt(config.noise_psd_dbm_hz),
        upload_bits=config.upload_bits,
        kappa=config.kappa,
    )


def default_fl_params(xi=0.1, step_size=0.1, eps0=1e-3, seed=7,
                      num_samples=2000, dim=8):
    """Learning constants with curvature measured on a synthetic task.

    The task is a well-conditioned linear regression, so the measured
    strong-convexity/lipschitz ratio comfortably admits the configured xi.
    """
    pool = make_regression_pool(num_samples, dim, noise=0.1, seed=seed)
    datasets = partition(pool, 4, mode="iid", seed=seed)
    lipschitz, gamma = estimate_curvature(datasets, LossModel("linear_regression"))
    return FlParams(lipschitz=lipschitz, strong_convexity=gamma, xi=xi,
                    step_size=step_size, eps0=eps0)


def run_experiment(scenario, fl, scheme, completion_time=None, tol=None,
                   coeffs=None):
    """Run one scheme on one scenario.

    With completion_time given, solves the energy problem at that deadline.
    With completion_time None, first minimizes the scheme's completion time
    and then solves the energy problem right at that minimum; the report's
    t_star records it.  Solver errors are re-raised with scheme context.
    """
    coeffs = coeffs or derive_coefficients(fl, scenario)
    try:
        if completion_time is None:
            t_star = scheme_min_time(scenario, fl, scheme, coeffs=coeffs)
            report = solve_scheme(scenario, fl, scheme, t_star, tol, coeffs)
            report.t_star = t_star
        else:
            report = solve_scheme(scenario, fl, scheme, completion_time, tol,
                                  coeffs)
    except InfeasibleError as exc:
        exc.scheme = scheme.kind
        raise
    return report


@dataclass(frozen=True)
class SweepSpec:
    """One experiment sweep.

    variable is "p_max" (completion-time minimization per scheme), "T"
    (energy at fixed deadlines), "K" (energy versus user count at fixed_T)
    or "batch_size" (training curves).  runs scenarios are drawn per value
    with seeds shared across values and schemes.
    """

    variable: str
    values: tuple
    runs: int = 50
    schemes: tuple = ("proposed", "eb_fdma", "fe_fdma", "tdma")
    fixed_T: float = None
    selected_count: int = None
    seed: int = 0

    def __post_init__(self):
        if self.variable not in ("p_max", "T", "K", "batch_size"):
            raise ValueError(f"unknown sweep variable {self.variable!r}")
        if not self.values:
            raise ValueError("sweep needs at least one value")
        if self.runs < 1:
            raise ValueError("runs must be at least 1")
        object.__setattr__(self, "values", tuple(self.values))
        object.__setattr__(self, "schemes", tuple(self.schemes))


_ROW_FIELDS = ("variable", "value", "run", "scheme", "seed", "t_star_s",
               "completion_time_s", "energy_J", "comp_energy_J",
               "tx_energy_J", "eta", "global_rounds", "error")


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, float):
        return FLOAT_FMT % x
    return str(x)


def _report_row(spec, value, run, scheme, seed, report=None, error=None):
    row = {k: None for k in _ROW_FIELDS}
    row.update(variable=spec.variable, value=value, run=run,
               scheme=scheme.kind, seed=seed, error=error or "")
    if report is not None:
        bd = report.breakdown
        row.update(
            t_star_s=report.t_star,
            completion_time_s=report.completion_time,
            energy_J=bd.total_energy,
            comp_energy_J=float(np.sum(bd.comp_energy)),
            tx_energy_J=float(np.sum(bd.tx_energy)),
            eta=report.allocation.eta,
            global_rounds=bd.global_iters,
        )
    return row


def run_sweep(spec, base_config, fl=None, out_dir=None, progress=None):
    """Execute a sweep and write sweep_long.csv / sweep_mean.csv / summary.json.

    Returns (rows, means).  Each cell draws its scenario from a seed that
    depends only on the run index, re-checks the returned allocation before
    writing, and records failures in the error column instead of aborting.
    """
    fl = fl or default_fl_params()
    if spec.variable == "batch_size":
        return _run_batch_sweep(spec, fl, out_dir)

    rows = []
    sample_report = None
    for value in spec.values:
        for run in range(spec.runs):
            seed = int(np.random.SeedSequence([spec.seed, run]).generate_state(1)[0])
            config = _cell_config(spec, base_config, value, seed)
            scenario = gen_scenario(config)
            for scheme_name in spec.schemes:
                scheme = SchemeKind.parse(scheme_name, seed=seed)
                if scheme.kind == "rs" and scheme.selected_count is None and spec.selected_count:
                    scheme = replace(scheme, selected_count=spec.selected_count)
                try:
                    report = run_experiment(
                        scenario, fl, scheme,
                        completion_time=_cell_deadline(spec, value))
                except InfeasibleError as exc:
                    rows.append(_report_row(spec, value, run, scheme, seed,
                                            error=str(exc)))
                    continue
                if report.violations:
                    rows.append(_report_row(
                        spec, value, run, scheme, seed,
                        error=f"violates {report.violations}"))
                    continue
                rows.append(_report_row(spec, value, run, scheme, seed, report))
                if sample_report is None:
                    sample_report = report
                if progress:
                    progress(value, run, scheme.kind)

    means = _aggregate(spec, rows)
    if out_dir is not None:
        _write_outputs(out_dir, spec, rows, means, sample_report)
    return rows, means


def _cell_config(spec, base_config, value, seed):
    config = replace(base_config, seed=seed)
    if spec.variable == "p_max":
        config = replace(config, p_max_dbm=float(value))
    elif spec.variable == "K":
        config = replace(config, num_users=int(value))
    return config


def _cell_deadline(spec, value):
    if spec.variable == "T":
        return float(value)
    return spec.fixed_T  # None means per-scheme completion-time minimization


def _aggregate(spec, rows):
    """Mean metrics per (value, scheme), errored rows excluded."""
    means = []
    for value in spec.values:
        for scheme_name in spec.schemes:
            kind = SchemeKind.parse(scheme_name).kind
            got = [r for r in rows
                   if r["value"] == value and r["scheme"] == kind and not r["error"]]
            entry = {"variable": spec.variable, "value": value, "scheme": kind,
                     "runs_ok": len(got)}
            for metric in ("t_star_s", "completion_time_s", "energy_J",
                           "comp_energy_J", "tx_energy_J", "eta",
                           "global_rounds"):
                vals = [r[metric] for r in got if r[metric] is not None]
                entry[f"mean_{metric}"] = (sum(vals) / len(vals)) if vals else None
            means.append(entry)
    return means


def _write_outputs(out_dir, spec, rows, means, sample_report):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "sweep_long.csv", _ROW_FIELDS, rows)
    if means:
        _write_csv(out / "sweep_mean.csv", list(means[0].keys()), means)
    summary = {
        "spec": {k: (list(v) if isinstance(v, tuple) else v)
                 for k, v in asdict(spec).items()},
        "means": means,
        "sample_report": report_to_dict(sample_report) if sample_report else None,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2,
                                                 sort_keys=True))


def _write_csv(path, fields, rows):
    with open(path, "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(fields)
        for row in rows:
            writer.writerow([_fmt(row.get(k)) for k in fields])


def report_to_dict(report):
    """JSON-ready view of a SolveReport."""
    alloc = report.allocation
    bd = report.breakdown
    return {
        "scheme": report.scheme,
        "completion_time_s": report.completion_time,
        "t_star_s": report.t_star,
        "iterations": report.iterations,
        "converged": report.converged,
        "violations": list(report.violations),
        "objective_trace_J": list(report.objective_trace),
        "allocation": None if alloc is None else {
            "t_s": alloc.t.tolist(),
            "b_hz": alloc.b.tolist(),
            "f_hz": alloc.f.tolist(),
            "p_w": alloc.p.tolist(),
            "eta": alloc.eta,
        },
        "breakdown": {
            "comp_energy_J": bd.comp_energy.tolist(),
            "tx_energy_J": bd.tx_energy.tolist(),
            "total_energy_J": bd.total_energy,
            "per_user_completion_s": bd.per_user_completion.tolist(),
            "global_iters": bd.global_iters,
            "local_iters": bd.local_iters.tolist(),
        },
        "notes": dict(report.notes),
    }


def scenario_to_dict(scenario):
    return {
        "users": [asdict(u) for u in scenario.users],
        "bandwidth": scenario.bandwidth,
        "noise_psd": scenario.noise_psd,
        "upload_bits": scenario.upload_bits,
        "kappa": scenario.kappa,
    }


def scenario_from_dict(data):
    return NetworkScenario(
        users=tuple(UserParams(**u) for u in data["users"]),
        bandwidth=data["bandwidth"],
        noise_psd=data["noise_psd"],
        upload_bits=data["upload_bits"],
        kappa=data["kappa"],
    )


@dataclass(frozen=True)
class TrainingSpec:
    """One training experiment: data source, split and solver settings."""

    csv_path: str = None
    normalize: bool = False
    synthetic_samples: int = 6000
    synthetic_dim: int = 8
    num_users: int = 12
    partition_mode: str = "iid"
    shards_per_user: int = 2
    shard_size: int = None
    local_solver: str = "gd"
    batch_size: int = None
    local_accuracy: float = 0.5
    fixed_local_iters: int = None
    max_rounds: int = 200
    eps0: float = 1e-3
    xi: float = 0.1
    step_size: float = None
    seed: int = 0


def run_training(spec, out_dir=None):
    """Run one federated training job and write per-round loss curves.

    The CSV has one row per round with the loss and the cumulative local
    computation count (gradient evaluations times samples touched).
    Returns (trace, rows).
    """
    if spec.csv_path:
        pool = load_csv(spec.csv_path, normalize=spec.normalize)
    else:
        pool = make_regression_pool(spec.synthetic_samples, spec.synthetic_dim,
                                    seed=spec.seed)
    shard_size = spec.shard_size
    if spec.partition_mode == "noniid" and shard_size is None:
        shard_size = pool.num_samples // (2 * spec.num_users * spec.shards_per_user) * 2
    datasets = partition(pool, spec.num_users, mode=spec.partition_mode,
                         shards_per_user=spec.shards_per_user,
                         shard_size=shard_size, seed=spec.seed)
    model = LossModel("linear_regression")
    lipschitz, gamma = estimate_curvature(datasets, model)
    step = spec.step_size if spec.step_size is not None else 1.0 / lipschitz
    xi = min(spec.xi, gamma / lipschitz)
    fl = FlParams(lipschitz=lipschitz, strong_convexity=gamma, xi=xi,
                  step_size=step, eps0=spec.eps0)
    if spec.fixed_local_iters is not None:
        stop = ("iters", spec.fixed_local_iters)
    else:
        stop = ("accuracy", spec.local_accuracy)
    config = DaneConfig(fl_params=fl, local_solver=spec.local_solver,
                        batch_size=spec.batch_size, local_stop=stop,
                        max_rounds=spec.max_rounds, seed=spec.seed)
    trace = run_dane(datasets, model, config)

    rows = [{"round": 0, "loss": trace.global_loss[0], "cum_computations": 0.0}]
    cum = 0.0
    for rnd, iters in enumerate(trace.local_iters, start=1):
        touched = spec.batch_size if spec.local_solver == "sgd" else None
        for user_iters, data in zip(iters, datasets):
            per_pass = touched if touched else data.num_samples
            cum += user_iters * per_pass
        rows.append({"round": rnd, "loss": trace.global_loss[rnd],
                     "cum_computations": cum})
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(out / "training.csv", ["round", "loss", "cum_computations"],
                   rows)
    return trace, rows


def _run_batch_sweep(spec, fl, out_dir):
    """Training-curve comparison across batch sizes at fixed local iterations."""
    rows = []
    for value in spec.values:
        for run in range(spec.runs):
            seed = int(np.random.SeedSequence([spec.seed, run]).generate_state(1)[0])
            batch = None if value in ("full", 0, "0") else int(value)
            tspec = TrainingSpec(
                local_solver="sgd" if batch else "gd",
                batch_size=batch,
                fixed_local_iters=10,
                max_rounds=60,
                seed=seed,
            )
            trace, curve = run_training(tspec)
            for point in curve:
                rows.append({"variable": "batch_size", "value": value,
                             "run": run, "seed": seed, **point})
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(out / "sweep_long.csv",
                   ["variable", "value", "run", "seed", "round", "loss",
                    "cum_computations"], rows)
    return rows, []
