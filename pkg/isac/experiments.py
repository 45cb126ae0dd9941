"""
Monte Carlo experiment runners, CSV persistence and plot-script emission.

Every trial draws from its own RNG stream derived from (seed, stream, trial),
so results do not depend on the worker count or scheduling order.
"""

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import pandas as pd

from . import analysis, beamform, channel, frame, sensing
from .config import ExperimentConfig
from .schemas import LOG_SCALE, PLOT_AXES, columns_for, validate_table

logger = logging.getLogger(__name__)

MSE_SWEEP_FRACTION = 0.25


def worker_count() -> int:
    value = os.environ.get("ISAC_THREADS", "1")
    try:
        workers = int(value)
    except ValueError as e:
        raise ValueError(f"ISAC_THREADS must be an integer, got {value!r}") from e
    return max(workers, 1)


def trial_rng(seed: int, trial: int, stream: int = 0) -> np.random.Generator:
    return np.random.default_rng([seed, stream, trial])


def map_trials(fn, n_trials: int) -> list:
    """Run fn(trial) for every trial; output order is the trial order"""
    workers = worker_count()
    if workers == 1:
        return [fn(trial) for trial in range(n_trials)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(n_trials)))


def _matched_gain(config: ExperimentConfig) -> float:
    """|h^UIB| of the LoS pair with unit path gains and aligned beams"""
    return math.sqrt(config.n_b) * config.n_i1 * config.n_i2


def _fractional_doppler(config: ExperimentConfig, grid: frame.OtfsGrid, rng: np.random.Generator,
                        fraction=None) -> float:
    """Random integer bin plus a fractional offset, inside the principal interval"""
    if fraction is None:
        fraction = rng.uniform(-0.5, 0.5)
    kappa = int(rng.integers(-(grid.N // 2) + 1, grid.N // 2))
    return (kappa + fraction) * grid.doppler_resolution


def _true_peak(nu: float, grid: frame.OtfsGrid):
    """Correct peak index and side for a given Doppler"""
    x = nu * grid.N * grid.T_s + grid.k_p
    k1 = math.floor(x + 0.5)
    side = sensing.Side.RIGHT if x - k1 >= 0 else sensing.Side.LEFT
    return k1 % grid.N, side


def _los_amplitudes(config, grid, gain_abs, nu, sigma2, rng):
    gain = gain_abs * np.exp(2j * np.pi * rng.random())
    return np.abs(channel.simulate_los_bin(grid, gain, nu, config.x_p, sigma2, rng))


def run_estimate(config: ExperimentConfig) -> pd.DataFrame:
    """Full pipeline: frame, cascaded channel, LoS bin extraction, ratio estimate"""
    grid = config.grid()
    rows = []
    for index, snr_db in enumerate(config.snr_db):
        params = config.scenario_params(snr_db)

        def one_trial(trial):
            rng = trial_rng(config.seed, trial, index)
            scenario = channel.random_scenario(params, rng)
            tx = frame.place_symbols(grid, config.x_p, frame.qpsk_symbols(grid.n_data, rng))
            if config.irs:
                r, xi = beamform.baseline_strongest(scenario)
            else:
                r, xi = beamform.baseline_no_irs(scenario)
            rx = channel.simulate_rx(tx, scenario, r, xi, rng)
            z = sensing.extract_los_bin(rx, grid, scenario.los_bin)
            report = sensing.ratio_estimate(z, grid)
            nu_true = scenario.los_nu
            return {
                "trial": trial,
                "snr_db": snr_db,
                "nu_true": nu_true,
                "nu_hat": report.nu_hat,
                "err": report.nu_hat - nu_true,
                "nu_integer": sensing.integer_peak_estimate(z, grid),
                "nu_oracle": sensing.oracle_grid_estimate(z, grid, config.oversample),
            }

        rows.extend(map_trials(one_trial, config.trials))
        logger.info(f"estimate: SNR {snr_db} dB done ({config.trials} trials)")
    return pd.DataFrame(rows, columns=columns_for("estimate")[:-1])


def run_prob_sweep(config: ExperimentConfig) -> pd.DataFrame:
    """Effective sensing probability: Monte Carlo event rate vs closed form"""
    grid = config.grid()
    if config.fraction == 0.0:
        raise ValueError("prob-sweep needs a fractional Doppler offset: an on-grid offset (fraction 0) "
                         "has no side peak to select")
    gain_abs = _matched_gain(config)
    rows = []
    for index, snr_db in enumerate(config.snr_db):
        sigma2 = config.sigma2(snr_db)

        def one_trial(trial):
            rng = trial_rng(config.seed, trial, index)
            nu = _fractional_doppler(config, grid, rng, config.fraction)
            z = _los_amplitudes(config, grid, gain_abs, nu, sigma2, rng)
            report = sensing.ratio_estimate(z, grid)
            k1, side = _true_peak(nu, grid)
            return report.k1 == k1 and report.side == side

        hits = map_trials(one_trial, config.trials)
        p_mc = float(np.mean(hits))
        if config.fraction is None:
            p_closed = analysis.p_eff_average(gain_abs, sigma2, grid, config.x_p)
        else:
            amps = analysis.kernel_amps(config.fraction * grid.doppler_resolution, grid, config.x_p)
            p_closed = analysis.p_eff_closed(gain_abs * amps.a_k2, gain_abs * amps.a_k3, sigma2)
            if config.fraction < 0:
                p_closed = 1.0 - p_closed
        rows.append({
            "snr_db": snr_db,
            "p_eff_mc": p_mc,
            "p_eff_closed": p_closed,
            "ci95": 1.96 * math.sqrt(p_mc * (1.0 - p_mc) / config.trials),
        })
        logger.info(f"prob-sweep: SNR {snr_db} dB -> MC {p_mc:.4f}, closed form {p_closed:.4f}")
    return pd.DataFrame(rows, columns=columns_for("prob-sweep")[:-1])


def _closed_form(fn, *args, default=float("nan")):
    """Closed-form value, or NaN where its moment conditions fail at this SNR"""
    try:
        return fn(*args)
    except ValueError as e:
        logger.warning(f"{fn.__name__}: {e}")
        return default


def run_mse_sweep(config: ExperimentConfig) -> pd.DataFrame:
    """MSE at a fixed fractional offset: Monte Carlo (all / correctly selected) vs closed forms"""
    grid = config.grid()
    fraction = MSE_SWEEP_FRACTION if config.fraction is None else config.fraction
    if not 0 < abs(fraction) < 0.5:
        raise ValueError(f"mse-sweep needs a fractional Doppler offset with 0 < |f| < 1/2, got {fraction}")
    gain_abs = _matched_gain(config)
    amps = analysis.kernel_amps(fraction * grid.doppler_resolution, grid, config.x_p)
    z1p, z2p = gain_abs * amps.a_k1, gain_abs * amps.side_amp
    rows = []
    for index, snr_db in enumerate(config.snr_db):
        sigma2 = config.sigma2(snr_db)

        def one_trial(trial):
            rng = trial_rng(config.seed, trial, index)
            nu = _fractional_doppler(config, grid, rng, fraction)
            z = _los_amplitudes(config, grid, gain_abs, nu, sigma2, rng)
            report = sensing.ratio_estimate(z, grid)
            err, _ = sensing.wrap_doppler(report.nu_hat - nu, grid)
            k1, side = _true_peak(nu, grid)
            return err ** 2, report.k1 == k1 and report.side == side

        results = map_trials(one_trial, config.trials)
        sq_err = np.array([r[0] for r in results])
        correct = np.array([r[1] for r in results])
        delta_lower, delta_upper = _closed_form(analysis.mse_error_sandwich, amps, z1p, z2p, sigma2, grid,
                                                default=(float("nan"), float("nan")))
        rows.append({
            "snr_db": snr_db,
            "mse_mc": float(sq_err.mean()),
            "mse_cond_mc": float(sq_err[correct].mean()) if correct.any() else float("nan"),
            "mse_approx": _closed_form(analysis.mse_approx, amps, z1p, z2p, sigma2, grid),
            "mse_upper": _closed_form(analysis.mse_upper, amps, z1p, z2p, sigma2, grid),
            "delta_lower": delta_lower,
            "delta_upper": delta_upper,
        })
        logger.info(f"mse-sweep: SNR {snr_db} dB done")
    return pd.DataFrame(rows, columns=columns_for("mse-sweep")[:-1])


def run_beamform(config: ExperimentConfig) -> pd.DataFrame:
    """Joint design per random scenario at the first configured SNR"""
    grid = config.grid()
    snr_db = config.snr_db[0]
    params = config.scenario_params(snr_db)
    gamma1 = config.gamma1_hz2()

    def one_trial(trial):
        rng = trial_rng(config.seed, trial)
        scenario = channel.random_scenario(params, rng)
        table = beamform.build_trace_table(scenario)
        result = beamform.optimize(scenario, gamma1, config.t1, config.eps1,
                                   admm_iters=config.admm_iters, trace_table=table)
        h = channel.effective_channel(scenario, result.r, result.xi, truncated=True)
        gamma = 1.0 / scenario.sigma2
        return {
            "trial": trial,
            "objective_init": result.objectives[0],
            "objective_final": result.objectives[-1],
            "iterations": result.iterations,
            "rate": beamform.rate(h, gamma),
            "rate_lower_bound": beamform.rate_lower_bound(result.objectives[-1], gamma,
                                                          grid.n_data, grid.size),
            "los_gain": beamform.los_gain(scenario, result.r, result.xi),
            "gamma_prime": result.state.gamma_prime,
        }

    rows = map_trials(one_trial, config.trials)
    return pd.DataFrame(rows, columns=columns_for("beamform")[:-1])


def run_rate_sweep(config: ExperimentConfig) -> pd.DataFrame:
    """Mean achievable rate of the joint design against the baselines"""
    gamma1 = config.gamma1_hz2()
    rows = []
    for index, snr_db in enumerate(config.snr_db):
        params = config.scenario_params(snr_db)

        def one_trial(trial):
            rng = trial_rng(config.seed, trial)
            scenario = channel.random_scenario(params, rng)
            table = beamform.build_trace_table(scenario)
            gamma = 1.0 / scenario.sigma2
            result = beamform.optimize(scenario, gamma1, config.t1, config.eps1,
                                       admm_iters=config.admm_iters, trace_table=table)
            designs = {
                "rate_subspace": (result.r, result.xi),
                "rate_strongest": beamform.baseline_strongest(scenario),
                "rate_random": beamform.baseline_random(scenario, trial_rng(config.seed, trial, index + 1),
                                                        table),
                "rate_no_irs": beamform.baseline_no_irs(scenario, table),
            }
            return {
                name: beamform.rate(channel.effective_channel(scenario, r, xi, truncated=True), gamma)
                for name, (r, xi) in designs.items()
            }

        results = map_trials(one_trial, config.trials)
        row = {"snr_db": snr_db}
        for name in ("rate_subspace", "rate_strongest", "rate_random", "rate_no_irs"):
            row[name] = float(np.mean([r[name] for r in results]))
        rows.append(row)
        logger.info(f"rate-sweep: SNR {snr_db} dB -> subspace {row['rate_subspace']:.4f} bit/s/Hz")
    return pd.DataFrame(rows, columns=columns_for("rate-sweep")[:-1])


def run_convergence(config: ExperimentConfig) -> pd.DataFrame:
    """Objective and rate per outer iteration, averaged over scenarios"""
    params = config.scenario_params(config.snr_db[0])
    gamma1 = config.gamma1_hz2()

    def one_trial(trial):
        rng = trial_rng(config.seed, trial)
        scenario = channel.random_scenario(params, rng)
        result = beamform.optimize(scenario, gamma1, config.t1, config.eps1,
                                   admm_iters=config.admm_iters, exact_rate=True)
        pad = config.t1 + 1 - len(result.objectives)
        objectives = result.objectives + [result.objectives[-1]] * pad
        rates = result.rate_trace + [result.rate_trace[-1]] * pad
        return objectives, rates

    results = map_trials(one_trial, config.trials)
    objectives = np.mean([r[0] for r in results], axis=0)
    rates = np.mean([r[1] for r in results], axis=0)
    return pd.DataFrame({
        "iter": np.arange(config.t1 + 1),
        "objective": objectives,
        "rate": rates,
    })


def run_velocity_sweep(config: ExperimentConfig) -> pd.DataFrame:
    """Estimator MSE against user speed at the first configured SNR"""
    grid = config.grid()
    sigma2 = config.sigma2(config.snr_db[0])
    gain_abs = _matched_gain(config)
    wavelength = channel.SPEED_OF_LIGHT / config.f_c_hz
    logger.info(f"velocity-sweep: velocity limit lambda/T_s = "
                f"{sensing.max_velocity(grid, config.f_c_hz) * 3.6:.1f} km/h")
    rows = []
    for index, velocity in enumerate(config.velocities_kmh):
        nu = (velocity / 3.6) / wavelength

        def one_trial(trial):
            rng = trial_rng(config.seed, trial, index)
            z = _los_amplitudes(config, grid, gain_abs, nu, sigma2, rng)
            ratio = sensing.ratio_estimate(z, grid).nu_hat
            return (ratio - nu) ** 2, (sensing.integer_peak_estimate(z, grid) - nu) ** 2

        results = map_trials(one_trial, config.trials)
        rows.append({
            "velocity_kmh": velocity,
            "mse_ratio": float(np.mean([r[0] for r in results])),
            "mse_integer": float(np.mean([r[1] for r in results])),
        })
    return pd.DataFrame(rows, columns=columns_for("velocity-sweep")[:-1])


RUNNERS = {
    "estimate": run_estimate,
    "prob-sweep": run_prob_sweep,
    "mse-sweep": run_mse_sweep,
    "beamform": run_beamform,
    "rate-sweep": run_rate_sweep,
    "convergence": run_convergence,
    "velocity-sweep": run_velocity_sweep,
}


def run_experiment(config: ExperimentConfig) -> pd.DataFrame:
    """Run the configured experiment and return its validated result table"""
    config_hash = config.config_hash()
    logger.info(f"Running {config.kind}: {config.trials} trials, SNR {config.snr_db} dB, "
                f"config {config_hash}")
    table = RUNNERS[config.kind](config)
    table["config_hash"] = config_hash
    return validate_table(config.kind, table)


def emit_csv(table: pd.DataFrame, path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        table.to_csv(path, index=False)
    except OSError as e:
        logger.error(f"Could not write {path}: {e}")
        raise
    logger.info(f"Saved {len(table)} rows to {path}")
    return path


PLOT_TEMPLATE = '''#!/usr/bin/env python3
"""Plot {kind} results from {csv_name}"""

import matplotlib.pyplot as plt
import pandas as pd

df = pd.read_csv("{csv_path}")
fig, ax = plt.subplots(figsize=(6, 4))
for column in {metrics!r}:
    ax.plot(df["{axis}"], df[column], marker="o", label=column)
ax.set_xlabel("{axis}")
{yscale}ax.grid(True, alpha=0.3)
ax.legend()
fig.tight_layout()
fig.savefig("{png_path}", dpi=150)
'''


def emit_plot_script(kind: str, csv_path, path) -> Path:
    """Write a standalone matplotlib script that reads only the CSV"""
    axis, metrics = PLOT_AXES[kind]
    csv_path = Path(csv_path)
    path = Path(path)
    script = PLOT_TEMPLATE.format(
        kind=kind,
        csv_name=csv_path.name,
        csv_path=csv_path.as_posix(),
        metrics=metrics,
        axis=axis,
        yscale='ax.set_yscale("log")\n' if kind in LOG_SCALE else "",
        png_path=csv_path.with_suffix(".png").as_posix(),
    )
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(script)
    except OSError as e:
        logger.error(f"Could not write {path}: {e}")
        raise
    logger.info(f"Saved plot script to {path}")
    return path
