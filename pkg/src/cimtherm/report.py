"""End-to-end composition: config -> kernel -> execution -> thermal -> report.

Reports are plain dictionaries rendered to JSON with deterministic key order;
identical configuration and seed produce byte-identical output apart from the
timestamp field, and a parameter hash ties every artifact back to its inputs.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import time
from pathlib import Path

import numpy as np

from . import __version__
from .arraysim import (ArrayState, ExecutionStats, MultiArrayPlan, PowerMap,
                       combine_power_maps, multi_array_run, run)
from .hopfield import (execute_plan_functional, gen_hopfield, max_nn_neurons,
                       random_instance)
from .kernels import KernelBuild, decode_vmul_result, gen_inv, gen_vmul
from .tech import KernelKind, SimulationConfig, dump_config
from .thermal import (assemble_conductance, build_grid, field_metrics,
                      heatmap_pgm, max_duty_cycle, solve_steady_state,
                      temperature_csv, temperature_text_matrix)

THROTTLE_LIMIT_C = 125.0      # silicon process corner used for duty planning
NN_ITERATION_CAP = 8          # trajectory prefix kept for thermal windows
MULTI_NN_CHUNKS = 4


def param_hash(config: SimulationConfig, **extra) -> str:
    payload = dump_config(config) + json.dumps(extra, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _stats_dict(stats: ExecutionStats) -> dict:
    return {
        "cycles": stats.cycles,
        "instructions_executed": stats.instructions_executed,
        "idle_cycles": stats.idle_cycles,
        "throttle_idle_cycles": stats.throttle_idle_cycles,
        "barrier_idle_cycles": stats.barrier_idle_cycles,
        "idle_instructions": stats.idle_instructions,
        "op_counts": dict(sorted(stats.op_counts.items())),
        "total_energy_j": stats.total_energy_j,
        "sim_time_s": stats.sim_time_s,
    }


def build_kernel(config: SimulationConfig, *, multi_array: bool = False):
    """Instantiate the configured benchmark; returns a KernelBuild or a plan."""
    spec = config.kernel
    kind = spec.kind
    rows, cols = config.array_rows, config.array_cols
    if kind in (KernelKind.INVFX, KernelKind.INVSHFT):
        return gen_inv(rows, cols, config.utilization, fixed=kind is KernelKind.INVFX)
    if kind in (KernelKind.VMULMIX, KernelKind.VMULNOR):
        return gen_vmul(rows, cols, config.utilization, bit_width=spec.bit_width,
                        matrix_rows=spec.matrix_rows, seed=spec.seed, adder=kind.adder)
    # network kernels
    if multi_array:
        neurons = spec.neurons if spec.neurons is not None else cols - 12
        chunks = MULTI_NN_CHUNKS
    else:
        neurons = spec.neurons if spec.neurons is not None else min(
            max_nn_neurons(rows, cols, spec.bit_width, kind.adder),
            math.ceil(config.utilization * cols))
        chunks = 1
    instance = random_instance(neurons, bit_width=spec.bit_width, seed=spec.seed)
    return gen_hopfield(rows, cols, config.technology, instance,
                        adder=kind.adder, update=kind.nn_update, n_chunks=chunks,
                        max_iterations=NN_ITERATION_CAP)


def _verify_vmul(build: KernelBuild, config: SimulationConfig) -> bool:
    state = ArrayState.from_bits(build.init_bits.copy(), config.technology)
    run(build.program, state, n_cycles=len(build.program))
    got = decode_vmul_result(build, state.bits)
    return bool(np.array_equal(got, build.metadata["expected"]))


def _verify_nn(plan: MultiArrayPlan, *, full: bool) -> bool:
    meta = plan.metadata
    instance = meta["instance"]
    theta = instance.bias.astype(np.int64)
    w = instance.weights.astype(np.int64)
    for it_index, decoded in enumerate(execute_plan_functional(plan)):
        rec = meta["iterations"][it_index]
        # recompute every column's thresholded value from the pre-update state
        state_before = decoded["state"].copy()
        state_before[rec["neuron"]] = _pre_update_value(meta, it_index, decoded)
        dots = state_before @ w
        if not np.array_equal(decoded["d_vector"], dots - theta):
            return False
        if not full:
            break
    return True


def _pre_update_value(meta, it_index, decoded) -> int:
    # states only change at their own update; the pre-update value is whatever
    # the neuron was last set to, falling back to the initial state
    rec = meta["iterations"][it_index]
    for back in range(it_index - 1, -1, -1):
        if meta["iterations"][back]["neuron"] == rec["neuron"]:
            return int(meta["iterations"][back]["new_value"])
    return int(meta["instance"].initial_state[rec["neuron"]])


def run_simulation(config: SimulationConfig, *, multi_array: bool = False,
                   solver: str = "auto", outdir: str | Path | None = None,
                   check_oracle: bool = True) -> dict:
    """Execute the configured kernel and solve its steady-state thermal field."""
    build = build_kernel(config, multi_array=multi_array)
    tech, stack = config.technology, config.stack
    report: dict = {
        "model_version": __version__,
        "param_hash": param_hash(config, multi_array=multi_array),
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
        "config": dump_config(config),
        "plan": "multi" if multi_array else "single",
        "kernel": config.kernel.kind.value,
    }

    if isinstance(build, KernelBuild):
        state = ArrayState.from_bits(build.init_bits.copy(), tech)
        pmap, stats, state = run(build.program, state, sim_time=config.sim_time,
                                 duty_cycle=config.duty_cycle)
        power_maps = [pmap]
        stats_list = [stats]
        report["utilization_realized"] = build.utilization_realized
        report["utilization_axis"] = build.utilization_axis
        if check_oracle and "expected" in build.metadata:
            report["oracle_match"] = _verify_vmul(build, config)
        combined = pmap
    else:
        plan: MultiArrayPlan = build
        results = multi_array_run(plan, sim_time=config.sim_time,
                                  duty_cycle=config.duty_cycle)
        power_maps = [r[0] for r in results]
        stats_list = [r[1] for r in results]
        meta = plan.metadata
        report["utilization_realized"] = meta["utilization_realized"]
        report["utilization_axis"] = meta["utilization_axis"]
        report["per_phase"] = [
            {"label": p.label, "cycles": p.duration()} for p in plan.phases]
        if check_oracle:
            report["oracle_match"] = _verify_nn(plan, full=meta["neurons"] <= 64)
        combined = combine_power_maps(power_maps) if len(power_maps) > 1 else power_maps[0]

    report["stats"] = [_stats_dict(s) for s in stats_list]
    report["power"] = combined.summary()

    grid = build_grid(config.array_rows, config.array_cols, tech, stack,
                      config.coalesce_factor)
    system = assemble_conductance(grid)
    fields = [solve_steady_state(system, m.cell_power, method=solver)
              for m in power_maps]
    metrics = [field_metrics(f, m.cell_power) for f, m in zip(fields, power_maps)]
    hottest = max(range(len(fields)), key=lambda i: fields[i].rise_max)
    report["thermal"] = metrics[hottest]
    if len(metrics) > 1:
        report["thermal_per_array"] = metrics
    report["max_duty_cycle_125c"] = max_duty_cycle(
        fields[hottest].rise_max / config.duty_cycle, THROTTLE_LIMIT_C, stack.ambient_c)

    if outdir is not None:
        _write_artifacts(Path(outdir), report, power_maps, fields, combined)
    return report


def report_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True, default=_json_default)


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _write_artifacts(outdir: Path, report: dict, power_maps, fields, combined) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "report.json").write_text(report_json(report))
    tag = lambda i: f"_array{i}" if len(power_maps) > 1 else ""
    for i, pmap in enumerate(power_maps):
        out = io.StringIO()
        np.savetxt(out, pmap.cell_power, delimiter=",", fmt="%.6e")
        (outdir / f"power{tag(i)}.csv").write_text(out.getvalue())
        (outdir / f"power{tag(i)}.json").write_text(
            json.dumps(pmap.summary(), indent=2, sort_keys=True))
    for i, fld in enumerate(fields):
        (outdir / f"temperature_active{tag(i)}.csv").write_text(temperature_csv(fld, "active"))
        (outdir / f"temperature_bulk{tag(i)}.csv").write_text(temperature_csv(fld, "bulk"))
        (outdir / f"temperature_active{tag(i)}.txt").write_text(
            temperature_text_matrix(fld, "active"))
        (outdir / f"heatmap_active{tag(i)}.pgm").write_bytes(heatmap_pgm(fld, "active"))


# --- sweeps -----------------------------------------------------------------

SWEEP_AXES = ("utilization", "duty_cycle", "array_size", "technology")

SWEEP_COLUMNS = [
    ("axis_value", ""),
    ("total_power_w", "W"),
    ("power_density_w_cm2", "W/cm^2"),
    ("t_max_c", "degC"),
    ("t_min_c", "degC"),
    ("rise_max_k", "K"),
    ("rise_min_k", "K"),
    ("max_duty_cycle_125c", "fraction"),
    ("utilization_realized", "fraction"),
    ("error", ""),
]


def run_sweep(config: SimulationConfig, axis: str, values, *,
              solver: str = "auto") -> list[dict]:
    """One run per axis value; per-point failures are recorded, not fatal."""
    from dataclasses import replace

    from .tech import ARRAY_SIZES, TechKind, builtin_technology

    if axis not in SWEEP_AXES:
        raise ValueError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")
    rows = []
    for value in values:
        if axis == "utilization":
            cfg = replace(config, utilization=float(value))
        elif axis == "duty_cycle":
            cfg = replace(config, duty_cycle=float(value))
        elif axis == "array_size":
            if str(value) in ARRAY_SIZES:
                r, c = ARRAY_SIZES[str(value)]
            else:
                r, c = (int(x) for x in str(value).lower().split("x"))
            cfg = replace(config, array_rows=r, array_cols=c)
        else:
            cfg = replace(config, technology=builtin_technology(TechKind(str(value).lower())))
        point = {"axis": axis, "axis_value": value}
        try:
            rep = run_simulation(cfg, solver=solver, check_oracle=False)
            point.update({
                "total_power_w": rep["power"]["total_power_w"],
                "power_density_w_cm2": rep["power"]["power_density_w_cm2"],
                "t_max_c": rep["thermal"]["t_max_c"],
                "t_min_c": rep["thermal"]["t_min_c"],
                "rise_max_k": rep["thermal"]["rise_max_k"],
                "rise_min_k": rep["thermal"]["rise_min_k"],
                "max_duty_cycle_125c": rep["max_duty_cycle_125c"],
                "utilization_realized": rep["utilization_realized"],
                "error": "",
            })
        except Exception as exc:  # record and continue with the remaining points
            point["error"] = f"{type(exc).__name__}: {exc}"
        rows.append(point)
    return rows


def sweep_csv(rows: list[dict]) -> str:
    out = io.StringIO()
    writer = csv.writer(out)
    writer.writerow([f"{name} [{unit}]" if unit else name
                     for name, unit in SWEEP_COLUMNS])
    for row in rows:
        writer.writerow([row.get(name, "") for name, _ in SWEEP_COLUMNS])
    return out.getvalue()


# --- multi-array network comparison -------------------------------------------

def nn_plan_windows(plan: MultiArrayPlan, min_time: float) -> int:
    """Cycle count covering at least min_time as whole schedule blocks."""
    t_clk = plan.arrays[0].tech.t_clk
    block = plan.block_cycles()
    blocks = max(1, math.ceil(min_time / t_clk / block))
    return blocks * block


def run_nn_comparison(config: SimulationConfig, *, solver: str = "auto") -> dict:
    """Concurrent 4+1-array plan versus the same workload serialized on one array.

    The serialized baseline time-shares one physical footprint, so its power
    map is the cell-wise sum of the per-phase maps over the stretched window.
    """
    plan = build_kernel(config, multi_array=True)
    serial = plan.serialized()
    meta = plan.metadata
    iters = len(meta["iterations"])

    out: dict = {
        "neurons": meta["neurons"],
        "active_columns": len(meta["lanes"]),
        "columns": config.array_cols,
        "block_cycles_multi": plan.block_cycles(),
        "block_cycles_serial": serial.block_cycles(),
        "iterations_per_block": iters,
    }
    out["speedup"] = out["block_cycles_serial"] / out["block_cycles_multi"]

    results = {}
    for name, p in (("multi", plan), ("serial", serial)):
        n_cycles = nn_plan_windows(p, config.sim_time)
        res = multi_array_run(p, n_cycles=n_cycles, duty_cycle=config.duty_cycle)
        window = res[0][1].sim_time_s
        energy = sum(r[1].total_energy_j for r in res)
        blocks = n_cycles / p.block_cycles()
        results[name] = res
        out[f"window_s_{name}"] = window
        out[f"energy_j_{name}"] = energy
        out[f"avg_power_w_{name}"] = energy / window
        out[f"energy_per_iteration_j_{name}"] = energy / (blocks * iters)
    out["power_factor"] = out["avg_power_w_multi"] / out["avg_power_w_serial"]
    out["energy_per_iteration_overhead"] = (
        out["energy_per_iteration_j_multi"] / out["energy_per_iteration_j_serial"] - 1.0)

    # thermal: per-array for the concurrent plan, shared footprint for serial
    grid = build_grid(config.array_rows, config.array_cols, config.technology,
                      config.stack, config.coalesce_factor)
    system = assemble_conductance(grid)
    per_array = []
    for pmap, stats, _ in results["multi"]:
        fld = solve_steady_state(system, pmap.cell_power, method=solver)
        per_array.append(field_metrics(fld, pmap.cell_power))
    out["thermal_per_array_multi"] = per_array
    serial_map = combine_power_maps([r[0] for r in results["serial"]])
    fld = solve_steady_state(system, serial_map.cell_power, method=solver)
    out["thermal_serial"] = field_metrics(fld, serial_map.cell_power)
    return out
