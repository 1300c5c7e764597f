"""Scenario runs, convergence sweeps and the sphere stitching experiment."""

from __future__ import annotations

import asyncio
import functools
import logging
import time
from concurrent.futures import Executor, ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from .cells import build_cells, stitching_error
from .cloud import build_neighborhoods, compute_time_step, discretize_domain
from .config import ScenarioConfig, dump_config, with_overrides
from .const import CONFIG_ECHO_FILE, DIAGNOSTICS_FILE, METHODS, SUMMARY_FILE
from .export import (
    DiagnosticsLog,
    read_summary,
    write_cells_csv,
    write_cells_vtk,
    write_points_csv,
    write_points_vtk,
    write_stencils_csv,
    write_summary,
    write_table,
)
from .metrics import convergence_rate, domain_integral
from .scenarios import get_scenario

_LOGGER = logging.getLogger(__name__)

CONVERGENCE_HEADER = ("h", "N", "eps_classical", "r_classical", "eps_fc", "r_fc")
TIMESTEP_HEADER = ("dt", "steps", "eps_classical", "r_classical", "eps_fc", "r_fc")
STITCH_HEADER = ("beta", "eps_mesh", "mean_n", "n_points", "defects")


@dataclass
class RunArtifacts:
    out_dir: Path
    diagnostics: Path
    config_echo: Path
    summary: Optional[Path] = None
    snapshots: list[Path] = field(default_factory=list)
    metrics: dict[str, Any] = field(default_factory=dict)


def _snapshot(out_dir: Path, step: int, state) -> list[Path]:
    paths = [
        write_points_csv(out_dir / f"points_{step}.csv", state.cloud),
        write_points_vtk(out_dir / f"points_{step}.vtk", state.cloud),
    ]
    ops = state.operators
    if ops is not None:
        paths.append(write_cells_csv(out_dir / f"cells_{step}.csv", ops.cells))
        paths.append(write_cells_vtk(out_dir / f"cells_{step}.vtk", ops.cells))
        if _LOGGER.isEnabledFor(logging.DEBUG):
            paths.append(write_stencils_csv(out_dir / f"stencils_{step}.csv", state.cloud, ops.rows))
    return paths


def run_scenario(config: ScenarioConfig) -> RunArtifacts:
    """Generate the cloud, step to t_end and write diagnostics and summary."""
    scenario = get_scenario(config.scenario)
    if not scenario.time_dependent:
        raise ValueError(f"{config.scenario} has no time stepping; use the stitch experiment")

    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    config_echo = out_dir / CONFIG_ECHO_FILE
    config_echo.write_text(dump_config(config))
    artifacts = RunArtifacts(out_dir=out_dir, diagnostics=out_dir / DIAGNOSTICS_FILE, config_echo=config_echo)

    start = time.perf_counter()
    domain = scenario.domain(config)
    cloud = discretize_domain(domain, config.h, config.cloud_params(), config.seed)
    scenario.initialize(cloud, config)
    state = scenario.make_state(cloud, domain, config)
    n_initial = len(cloud)
    if scenario.transport:
        cells = build_cells(cloud, build_neighborhoods(cloud))
        state.history.initial_phi_integral = domain_integral(cells, cloud.phi)

    _LOGGER.info(
        "Running %s (%s) with h=%g, %d points, t_end=%g",
        config.scenario, config.method, config.h, n_initial, config.t_end,
    )
    t_end = config.t_end
    with DiagnosticsLog(artifacts.diagnostics) as log:
        while state.t < t_end * (1.0 - 1e-12):
            dt = config.dt or compute_time_step(state.cloud)
            dt = min(dt, t_end - state.t)
            scenario.step(state, dt)
            log.append(state.history.records[-1])
            if config.snapshot_every and state.step % config.snapshot_every == 0:
                artifacts.snapshots.extend(_snapshot(out_dir, state.step, state))

    history = state.history
    metrics = {
        **scenario.final_metrics(state),
        "mean_eps_ddt": history.mean("eps_ddt"),
        "runtime_seconds": time.perf_counter() - start,
        "operator_seconds": history.total("operator_seconds"),
        "solver_seconds": history.total("solver_seconds"),
        "iterations": int(history.total("iterations")),
        "dropped_constraints": int(history.total("dropped_constraints")),
        "scenario": config.scenario,
        "method": config.method,
        "h": float(config.h),
        "n_points_initial": n_initial,
        "n_points_final": len(state.cloud),
        "steps": state.step,
        "t_end": float(state.t),
        "pressure_guess": "previous",
    }
    artifacts.summary = write_summary(out_dir / SUMMARY_FILE, metrics)
    artifacts.metrics = metrics
    _LOGGER.info("Finished %s (%s) after %d steps", config.scenario, config.method, state.step)
    return artifacts


def _run_cell(config: ScenarioConfig) -> dict[str, Any]:
    return run_scenario(config).metrics


def _run_cell_safe(config: ScenarioConfig) -> Optional[dict[str, Any]]:
    """One sweep cell; failures are logged and reported as None."""
    try:
        return _run_cell(config)
    except Exception:  # noqa: BLE001
        _LOGGER.exception(
            "Sweep cell %s h=%s dt=%s failed", config.method, config.h, config.dt or "cfl"
        )
        return None


async def _run_cells(configs: Sequence[ScenarioConfig], workers: Optional[int]) -> list:
    loop = asyncio.get_running_loop()
    executor: Optional[Executor] = ProcessPoolExecutor(workers) if workers and workers > 1 else None
    try:
        if executor is None:
            results = []
            for config in configs:
                results.append(await loop.run_in_executor(None, functools.partial(_run_cell_safe, config)))
            return results
        futures = [
            loop.run_in_executor(executor, functools.partial(_run_cell_safe, config))
            for config in configs
        ]
        return list(await asyncio.gather(*futures))
    finally:
        if executor is not None:
            executor.shutdown()


def _rates(errors: list[Optional[float]], lengths: Sequence[float]) -> list[Optional[float]]:
    rates: list[Optional[float]] = [None]
    for k in range(1, len(errors)):
        prev, cur = errors[k - 1], errors[k]
        if prev is None or cur is None or prev <= 0.0 or cur <= 0.0:
            rates.append(None)
        else:
            rates.append(convergence_rate(prev, cur, lengths[k - 1], lengths[k]))
    return rates


def _sweep(
    config: ScenarioConfig,
    values: Sequence[float],
    key: str,
    workers: Optional[int],
) -> dict[str, list]:
    if len(values) < 2:
        raise ValueError(f"a sweep needs at least two {key} values")
    scenario = get_scenario(config.scenario)
    base = Path(config.out_dir)
    configs = [
        with_overrides(
            config,
            run={key: value, "method": method, "out_dir": str(base / f"{key}{value!r}_{method}")},
        )
        for value in values
        for method in METHODS
    ]
    results = asyncio.run(_run_cells(configs, workers))
    by_method: dict[str, list] = {method: [] for method in METHODS}
    for cfg, result in zip(configs, results):
        by_method[cfg.method].append(result)
    table = {}
    for method, cells in by_method.items():
        errors = [None if r is None else r.get(scenario.error_metric) for r in cells]
        table[method] = (errors, _rates(errors, values), cells)
    return table


def convergence_sweep(
    config: ScenarioConfig, h_list: Sequence[float], workers: Optional[int] = None
) -> list[list]:
    """Both methods at each h; rows (h, N, eps, r, eps, r) written to convergence.csv."""
    table = _sweep(config, h_list, "h", workers)
    rows = []
    for k, h in enumerate(h_list):
        cells = [table[m][2][k] for m in METHODS]
        n = next((c["n_points_initial"] for c in cells if c is not None), None)
        row = [h, n]
        for method in METHODS:
            errors, rates, _ = table[method]
            row.extend([errors[k] if errors[k] is not None else "failed", rates[k]])
        rows.append(row)
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_table(out_dir / "convergence.csv", CONVERGENCE_HEADER, rows)
    return rows


def timestep_sweep(
    config: ScenarioConfig, dt_list: Sequence[float], workers: Optional[int] = None
) -> list[list]:
    """Both methods at fixed h for each constant time step."""
    table = _sweep(config, dt_list, "dt", workers)
    rows = []
    for k, dt in enumerate(dt_list):
        cells = [table[m][2][k] for m in METHODS]
        steps = next((c["steps"] for c in cells if c is not None), None)
        row = [dt, steps]
        for method in METHODS:
            errors, rates, _ = table[method]
            row.extend([errors[k] if errors[k] is not None else "failed", rates[k]])
        rows.append(row)
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_table(out_dir / "timestep.csv", TIMESTEP_HEADER, rows)
    return rows


def stitch_experiment(config: ScenarioConfig, beta_list: Sequence[float]) -> list[list]:
    """Stitching error and mean support size of one cloud for several beta."""
    scenario = get_scenario(config.scenario)
    domain = scenario.domain(config)
    cloud = discretize_domain(domain, config.h, config.cloud_params(), config.seed)
    rows = []
    for beta in beta_list:
        cloud.params = replace(cloud.params, beta=beta)
        cloud.invalidate_index()
        nbhds = build_neighborhoods(cloud, required=cloud.dim + 2)
        cells = build_cells(cloud, nbhds)
        eps_mesh = stitching_error(cells)
        mean_n = float(np.mean([nb.count for nb in nbhds]))
        defects = sum(cell.defect for cell in cells)
        _LOGGER.info("beta=%g: eps_mesh=%.3e, mean support %.1f", beta, eps_mesh, mean_n)
        rows.append([beta, eps_mesh, mean_n, len(cloud), defects])
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_table(out_dir / "stitch.csv", STITCH_HEADER, rows)
    return rows


def compare_runs(dir_a: Path, dir_b: Path) -> list[list]:
    """Side-by-side numeric summary values of two runs."""
    a = read_summary(Path(dir_a) / SUMMARY_FILE)
    b = read_summary(Path(dir_b) / SUMMARY_FILE)
    rows = []
    for key in a:
        if key not in b:
            continue
        va, vb = a[key], b[key]
        if isinstance(va, float) and isinstance(vb, float):
            rows.append([key, va, vb, vb / va if va != 0.0 else None])
        else:
            rows.append([key, va, vb, None])
    return rows
