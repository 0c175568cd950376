"""Cycle-accurate SIMD execution of gate programs on memory arrays.

One instruction retires per array per clock. A gate instruction applies the
same gate with the same operand line indices to every active lane; lanes are
rows for row-parallel instructions and columns for column-parallel ones, and
operands index the orthogonal axis. Deposited energy is tracked per cell and
averaged over the simulated window into a power map.
"""
from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass, field

import numpy as np

from . import electrical
from .electrical import GateKind
from .tech import TechnologyParams


class ProgramError(ValueError):
    """Malformed instruction, operand out of range, or empty program."""


class Axis(enum.Enum):
    ROW = "row"
    COL = "col"


class LaneSet:
    """Sorted unique lane indices with a compact text form like 0..7,12,14."""

    __slots__ = ("indices",)

    def __init__(self, indices):
        arr = np.unique(np.asarray(tuple(indices), dtype=np.intp))
        if arr.size == 0:
            raise ProgramError("lane set is empty")
        if arr[0] < 0:
            raise ProgramError("negative lane index")
        arr.setflags(write=False)
        object.__setattr__(self, "indices", arr)

    def __setattr__(self, name, value):  # LaneSets are shared between instructions
        raise AttributeError("LaneSet is immutable")

    def __len__(self) -> int:
        return int(self.indices.size)

    def __iter__(self):
        return iter(self.indices.tolist())

    def __eq__(self, other) -> bool:
        return isinstance(other, LaneSet) and np.array_equal(self.indices, other.indices)

    def __hash__(self) -> int:
        return hash(self.indices.tobytes())

    def __repr__(self) -> str:
        return f"LaneSet({self.to_text()})"

    @property
    def max(self) -> int:
        return int(self.indices[-1])

    @classmethod
    def span(cls, n: int) -> "LaneSet":
        return cls(range(n))

    def to_text(self) -> str:
        parts = []
        run_start = prev = int(self.indices[0])
        for v in self.indices[1:].tolist() + [None]:
            if v is not None and v == prev + 1:
                prev = v
                continue
            parts.append(str(run_start) if run_start == prev else f"{run_start}..{prev}")
            if v is not None:
                run_start = prev = v
        return ",".join(parts)

    @classmethod
    def from_text(cls, text: str) -> "LaneSet":
        out: list[int] = []
        for part in text.split(","):
            part = part.strip()
            if ".." in part:
                lo, hi = part.split("..")
                out.extend(range(int(lo), int(hi) + 1))
            elif part:
                out.append(int(part))
        return cls(out)


@dataclass(frozen=True)
class GateOp:
    """SIMD gate: every active lane runs `gate` on the same operand lines."""

    lanes_axis: Axis            # axis the active lanes index
    gate: GateKind
    inputs: tuple[int, ...]     # operand lines on the orthogonal axis
    output: int
    lanes: LaneSet

    def __post_init__(self) -> None:
        if len(self.inputs) != self.gate.arity():
            raise ProgramError(f"{self.gate.value} needs {self.gate.arity()} inputs, got {len(self.inputs)}")
        operands = (*self.inputs, self.output)
        if len(set(operands)) != len(operands):
            raise ProgramError(f"operand lines must be pairwise distinct: {operands}")
        if min(operands) < 0:
            raise ProgramError("negative operand line index")


@dataclass(frozen=True)
class BulkSet:
    """Write one value across many cells of a single line in one cycle."""

    line_axis: Axis             # the axis the written line lies along
    line: int
    lanes: LaneSet              # positions along that line
    value: int

    def __post_init__(self) -> None:
        if self.line < 0:
            raise ProgramError("negative line index")
        if self.value not in (0, 1):
            raise ProgramError("value must be 0 or 1")


@dataclass(frozen=True)
class SerialWrite:
    row: int
    col: int
    value: int

    def __post_init__(self) -> None:
        if self.row < 0 or self.col < 0:
            raise ProgramError("negative cell index")
        if self.value not in (0, 1):
            raise ProgramError("value must be 0 or 1")


@dataclass(frozen=True)
class Idle:
    pass


Instruction = GateOp | BulkSet | SerialWrite | Idle


# --- program text form ----------------------------------------------------

def format_instruction(instr: Instruction) -> str:
    if isinstance(instr, Idle):
        return "IDLE"
    if isinstance(instr, SerialWrite):
        return f"WRITE row={instr.row} col={instr.col} val={instr.value}"
    if isinstance(instr, BulkSet):
        kw = "RBULK row" if instr.line_axis is Axis.ROW else "CBULK col"
        return f"{kw}={instr.line} lanes={instr.lanes.to_text()} val={instr.value}"
    if isinstance(instr, GateOp):
        head = "ROW" if instr.lanes_axis is Axis.ROW else "COL"
        ins = f"in={','.join(map(str, instr.inputs))} " if instr.inputs else ""
        return f"{head} {instr.gate.value} {ins}out={instr.output} lanes={instr.lanes.to_text()}"
    raise TypeError(f"not an instruction: {instr!r}")


def format_program(program) -> str:
    return "\n".join(format_instruction(i) for i in program) + "\n"


_KV = re.compile(r"(\w+)=(\S+)")


def parse_instruction(line: str) -> Instruction:
    text = line.split("#", 1)[0].strip()
    if not text:
        raise ProgramError("blank line is not an instruction")
    head, *rest = text.split(None, 1)
    kv = dict(_KV.findall(rest[0])) if rest else {}
    try:
        if head == "IDLE":
            return Idle()
        if head == "WRITE":
            return SerialWrite(int(kv["row"]), int(kv["col"]), int(kv["val"]))
        if head in ("RBULK", "CBULK"):
            axis = Axis.ROW if head == "RBULK" else Axis.COL
            line_idx = int(kv["row" if head == "RBULK" else "col"])
            return BulkSet(axis, line_idx, LaneSet.from_text(kv["lanes"]), int(kv["val"]))
        if head in ("ROW", "COL"):
            gate_name, params = rest[0].split(None, 1)
            kv = dict(_KV.findall(params))
            gate = GateKind(gate_name)
            inputs = tuple(int(x) for x in kv["in"].split(",")) if "in" in kv else ()
            return GateOp(Axis.ROW if head == "ROW" else Axis.COL, gate, inputs,
                          int(kv["out"]), LaneSet.from_text(kv["lanes"]))
    except (KeyError, ValueError) as exc:
        raise ProgramError(f"cannot parse instruction {line!r}: {exc}") from exc
    raise ProgramError(f"unknown instruction {line!r}")


def parse_program(text: str) -> list[Instruction]:
    program = []
    for line in text.splitlines():
        stripped = line.split("#", 1)[0].strip()
        if stripped:
            program.append(parse_instruction(stripped))
    return program


# --- array state and execution ---------------------------------------------

@dataclass
class ArrayState:
    """Dense bit grid of one array; mutated only by executed instructions."""

    tech: TechnologyParams
    bits: np.ndarray  # uint8 [rows, cols]

    @classmethod
    def zeros(cls, rows: int, cols: int, tech: TechnologyParams) -> "ArrayState":
        return cls(tech, np.zeros((rows, cols), dtype=np.uint8))

    @classmethod
    def from_bits(cls, bits: np.ndarray, tech: TechnologyParams) -> "ArrayState":
        return cls(tech, np.ascontiguousarray(bits, dtype=np.uint8))

    @property
    def rows(self) -> int:
        return self.bits.shape[0]

    @property
    def cols(self) -> int:
        return self.bits.shape[1]

    def copy(self) -> "ArrayState":
        return ArrayState(self.tech, self.bits.copy())


@dataclass
class ExecutionStats:
    """Bookkeeping for one simulated window on one array."""

    cycles: int = 0
    instructions_executed: int = 0
    throttle_idle_cycles: int = 0
    barrier_idle_cycles: int = 0
    idle_instructions: int = 0
    op_counts: dict[str, int] = field(default_factory=dict)
    total_energy_j: float = 0.0
    sim_time_s: float = 0.0

    @property
    def idle_cycles(self) -> int:
        return self.throttle_idle_cycles + self.barrier_idle_cycles + self.idle_instructions

    def count(self, key: str, n: int) -> None:
        self.op_counts[key] = self.op_counts.get(key, 0) + n


@dataclass
class PowerMap:
    """Time-averaged power per cell over one simulated window."""

    cell_power: np.ndarray  # W, [rows, cols]
    window_s: float
    cell_area_m2: float

    @property
    def total_power(self) -> float:
        return float(self.cell_power.sum())

    @property
    def power_density_w_cm2(self) -> float:
        area_cm2 = self.cell_power.size * self.cell_area_m2 * 1e4
        return self.total_power / area_cm2

    def summary(self) -> dict:
        return {
            "total_power_w": self.total_power,
            "power_density_w_cm2": self.power_density_w_cm2,
            "window_s": self.window_s,
        }


def step(state: ArrayState, instr: Instruction, energy: np.ndarray | None = None,
         stats: ExecutionStats | None = None) -> float:
    """Execute one instruction; returns the energy it deposited (J)."""
    bits = state.bits
    rows, cols = bits.shape
    tech = state.tech

    if isinstance(instr, Idle):
        if stats:
            stats.idle_instructions += 1
            stats.count("IDLE", 1)
        return 0.0

    if isinstance(instr, SerialWrite):
        if instr.row >= rows or instr.col >= cols:
            raise ProgramError(f"write target ({instr.row},{instr.col}) outside {rows}x{cols}")
        e = electrical.write_table(tech)[bits[instr.row, instr.col]]
        bits[instr.row, instr.col] = instr.value
        if energy is not None:
            energy[instr.row, instr.col] += e
        if stats:
            stats.count("WRITE", 1)
            stats.total_energy_j += e
        return float(e)

    if isinstance(instr, BulkSet):
        lanes = instr.lanes.indices
        if instr.line_axis is Axis.ROW:
            if instr.line >= rows or instr.lanes.max >= cols:
                raise ProgramError(f"bulk-set outside {rows}x{cols}")
            prior = bits[instr.line, lanes]
            e = electrical.write_table(tech)[prior]
            bits[instr.line, lanes] = instr.value
            if energy is not None:
                energy[instr.line, lanes] += e
        else:
            if instr.line >= cols or instr.lanes.max >= rows:
                raise ProgramError(f"bulk-set outside {rows}x{cols}")
            prior = bits[lanes, instr.line]
            e = electrical.write_table(tech)[prior]
            bits[lanes, instr.line] = instr.value
            if energy is not None:
                energy[lanes, instr.line] += e
        total = float(e.sum())
        if stats:
            stats.count("BULKSET", len(lanes))
            stats.total_energy_j += total
        return total

    if isinstance(instr, GateOp):
        table = electrical.op_table(tech, instr.gate)
        lanes = instr.lanes.indices
        operands = (*instr.inputs, instr.output)
        if instr.lanes_axis is Axis.COL:
            if instr.lanes.max >= cols or max(operands) >= rows:
                raise ProgramError(f"gate operands outside {rows}x{cols}")
            combo = np.zeros(lanes.size, dtype=np.intp)
            for k, line in enumerate(instr.inputs):
                combo += bits[line, lanes].astype(np.intp) << k
            prior = bits[instr.output, lanes]
            e_total = table.e_cycle[prior, combo].sum()
            if energy is not None:
                energy[instr.output, lanes] += table.e_preset[prior] + table.e_output[combo]
                for k, line in enumerate(instr.inputs):
                    energy[line, lanes] += table.e_inputs[k][combo]
            bits[instr.output, lanes] = table.new_output[combo]
        else:
            if instr.lanes.max >= rows or max(operands) >= cols:
                raise ProgramError(f"gate operands outside {rows}x{cols}")
            combo = np.zeros(lanes.size, dtype=np.intp)
            for k, line in enumerate(instr.inputs):
                combo += bits[lanes, line].astype(np.intp) << k
            prior = bits[lanes, instr.output]
            e_total = table.e_cycle[prior, combo].sum()
            if energy is not None:
                energy[lanes, instr.output] += table.e_preset[prior] + table.e_output[combo]
                for k, line in enumerate(instr.inputs):
                    energy[lanes, line] += table.e_inputs[k][combo]
            bits[lanes, instr.output] = table.new_output[combo]
        if stats:
            stats.count(instr.gate.value, lanes.size)
            stats.total_energy_j += float(e_total)
        return float(e_total)

    raise TypeError(f"not an instruction: {instr!r}")


def _window_cycles(tech: TechnologyParams, sim_time: float | None, n_cycles: int | None) -> int:
    if n_cycles is None:
        if sim_time is None:
            raise ProgramError("either sim_time or n_cycles is required")
        n_cycles = int(math.floor(sim_time / tech.t_clk + 1e-9))
    if n_cycles < 1:
        raise ProgramError("window shorter than one clock")
    return n_cycles


def _active_cycles(n_cycles: int, duty_cycle: float) -> int:
    # evenly spaced deterministic throttling: cycle t is active iff
    # floor((t+1)*d) > floor(t*d), so the active count over n cycles is floor(n*d)
    if not 0 < duty_cycle <= 1:
        raise ProgramError(f"duty_cycle must lie in (0, 1], got {duty_cycle}")
    return int(math.floor(n_cycles * duty_cycle + 1e-6))


def run(program, state: ArrayState, *, sim_time: float | None = None,
        n_cycles: int | None = None, duty_cycle: float = 1.0,
        ) -> tuple[PowerMap, ExecutionStats, ArrayState]:
    """Repeat the program cyclically over the window with duty-cycle throttling.

    Idle cycles injected by throttling deposit nothing; state advances only
    on active cycles. The power map averages deposited energy over the full
    window (active + idle).
    """
    program = list(program)
    if not program:
        raise ProgramError("empty program")
    n_cycles = _window_cycles(state.tech, sim_time, n_cycles)
    n_active = _active_cycles(n_cycles, duty_cycle)

    energy = np.zeros_like(state.bits, dtype=np.float64)
    stats = ExecutionStats(cycles=n_cycles, sim_time_s=n_cycles * state.tech.t_clk)
    stats.throttle_idle_cycles = n_cycles - n_active

    length = len(program)
    for i in range(n_active):
        step(state, program[i % length], energy, stats)
    stats.instructions_executed = n_active

    pmap = PowerMap(energy / stats.sim_time_s, stats.sim_time_s, state.tech.cell_area)
    return pmap, stats, state


# --- multi-array plans ------------------------------------------------------

@dataclass(frozen=True)
class ArraySpec:
    rows: int
    cols: int
    tech: TechnologyParams


@dataclass
class Injection:
    """Operand staging between arrays, applied at a phase boundary.

    Transfers are modelled as zero-cost state patches; inter-array
    interconnect energy is out of scope.
    """

    array: int
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray  # uint8, broadcastable to [len(rows), len(cols)]


@dataclass
class Phase:
    """One barrier-delimited step: arrays not listed idle for the duration."""

    segments: dict[int, list]
    injections: list[Injection] = field(default_factory=list)
    label: str = ""

    def duration(self) -> int:
        return max((len(s) for s in self.segments.values()), default=0)


@dataclass
class MultiArrayPlan:
    """Per-array programs organized into a repeating barrier schedule."""

    arrays: list[ArraySpec]
    init_bits: list[np.ndarray]
    phases: list[Phase]
    metadata: dict = field(default_factory=dict)

    def block_cycles(self) -> int:
        return sum(p.duration() for p in self.phases)

    def serialized(self) -> "MultiArrayPlan":
        """Same work with no concurrency: one array active per phase.

        Models time-sharing a single physical array; speedup and power
        comparisons divide out to schedule-length ratios.
        """
        phases: list[Phase] = []
        for phase in self.phases:
            first = True
            for idx in sorted(phase.segments):
                phases.append(Phase({idx: phase.segments[idx]},
                                    phase.injections if first else [],
                                    label=f"{phase.label}/array{idx}"))
                first = False
            if not phase.segments and phase.injections:
                phases.append(Phase({}, phase.injections, label=phase.label))
        return MultiArrayPlan(self.arrays, self.init_bits, phases,
                              dict(self.metadata, serialized=True))


def multi_array_run(plan: MultiArrayPlan, *, sim_time: float | None = None,
                    n_cycles: int | None = None, duty_cycle: float = 1.0,
                    ) -> list[tuple[PowerMap, ExecutionStats, ArrayState]]:
    """Run a barrier schedule cyclically; arrays idle while peers finish a phase.

    Throttle stalls are global, so barrier alignment is preserved. Arrays only
    interact through precomputed injections, so each is simulated independently
    over the shared schedule clock.
    """
    if not plan.arrays:
        raise ProgramError("plan has no arrays")
    if len(plan.init_bits) != len(plan.arrays):
        raise ProgramError("init_bits must match arrays")
    techs = {spec.tech for spec in plan.arrays}
    tech0 = plan.arrays[0].tech
    if len({t.t_clk for t in techs}) != 1:
        raise ProgramError("arrays in one plan must share a clock")
    block = plan.block_cycles()
    if block == 0:
        raise ProgramError("plan schedule is empty")
    n_cycles = _window_cycles(tech0, sim_time, n_cycles)
    n_active = _active_cycles(n_cycles, duty_cycle)

    results = []
    for idx, spec in enumerate(plan.arrays):
        state = ArrayState.from_bits(plan.init_bits[idx].copy(), spec.tech)
        energy = np.zeros((spec.rows, spec.cols), dtype=np.float64)
        stats = ExecutionStats(cycles=n_cycles, sim_time_s=n_cycles * tech0.t_clk)
        stats.throttle_idle_cycles = n_cycles - n_active
        pos = 0
        while pos < n_active:
            for phase in plan.phases:
                if pos >= n_active:
                    break
                for inj in phase.injections:
                    if inj.array == idx:
                        state.bits[np.ix_(inj.rows, inj.cols)] = inj.values
                avail = min(phase.duration(), n_active - pos)
                seg = phase.segments.get(idx, [])
                take = min(len(seg), avail)
                for instr in seg[:take]:
                    step(state, instr, energy, stats)
                stats.instructions_executed += take
                stats.barrier_idle_cycles += avail - take
                pos += avail
        pmap = PowerMap(energy / stats.sim_time_s, stats.sim_time_s, spec.tech.cell_area)
        results.append((pmap, stats, state))
    return results


def combine_power_maps(maps: list[PowerMap]) -> PowerMap:
    """Cell-wise sum of equally shaped windows sharing one physical footprint."""
    shapes = {m.cell_power.shape for m in maps}
    if len(shapes) != 1:
        raise ProgramError("power maps must share a footprint")
    if len({m.window_s for m in maps}) != 1:
        raise ProgramError("power maps must share a window")
    total = np.sum([m.cell_power for m in maps], axis=0)
    return PowerMap(total, maps[0].window_s, maps[0].cell_area_m2)
