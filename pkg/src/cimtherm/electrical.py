"""Resistive-network model of one in-memory Boolean gate operation.

A gate connects the input cells in parallel, in series with the output cell,
and drives the network with a gate-specific voltage. The input resistances
encode the operand bits; the current through the output cell either exceeds
the switching threshold (output flips away from its preset) or it does not.
The gate voltage is sized so that exactly the truth-table-mandated input
combinations switch the output:

    V_gate = i_crit * (R_sw + R_nsw) / 2

where R_sw is the network resistance of the hardest (highest-resistance)
input combination that must switch and R_nsw that of the easiest
(lowest-resistance) combination that must not, both taken with the output
in its preset state. Writes use a 10% margin over the worst-case
resistance instead.

Power is Joule heating: the network draws V_gate^2 / R_equiv during the
gate pulse, plus the preset write over the output cell's prior-state
resistance during the preset pulse.
"""
from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .tech import TechKind, TechnologyParams


class ModelInconsistencyError(RuntimeError):
    """Threshold decision disagrees with the Boolean truth table.

    Signals corrupted technology parameters; never raised for the built-in
    technologies.
    """


class GateKind(enum.Enum):
    WRITE0 = "WRITE0"
    WRITE1 = "WRITE1"
    NOT = "NOT"
    NOR2 = "NOR2"
    OR2 = "OR2"
    NAND2 = "NAND2"
    AND2 = "AND2"
    MAJ3 = "MAJ3"
    MAJ5 = "MAJ5"

    def arity(self) -> int:
        return _ARITY[self]


_ARITY = {
    GateKind.WRITE0: 0, GateKind.WRITE1: 0, GateKind.NOT: 1,
    GateKind.NOR2: 2, GateKind.OR2: 2, GateKind.NAND2: 2, GateKind.AND2: 2,
    GateKind.MAJ3: 3, GateKind.MAJ5: 5,
}

# Preset bit per gate. Inverting gates preset low and switch high on enough
# low-resistance inputs; the rest preset high and switch low. NOT must preset
# low: with a high preset its must-switch combination (input 1) would be the
# high-resistance one, so no single current threshold could realize it.
GATE_PRESET = {
    GateKind.NOT: 0, GateKind.NOR2: 0, GateKind.NAND2: 0,
    GateKind.OR2: 1, GateKind.AND2: 1, GateKind.MAJ3: 1, GateKind.MAJ5: 1,
}

LOGIC_GATES = tuple(GATE_PRESET)


def gate_truth(gate: GateKind, bits: tuple[int, ...]) -> int:
    if gate is GateKind.NOT:
        return 1 - bits[0]
    if gate is GateKind.NAND2:
        return 1 - (bits[0] & bits[1])
    if gate is GateKind.AND2:
        return bits[0] & bits[1]
    if gate is GateKind.NOR2:
        return 1 - (bits[0] | bits[1])
    if gate is GateKind.OR2:
        return bits[0] | bits[1]
    if gate in (GateKind.MAJ3, GateKind.MAJ5):
        return int(2 * sum(bits) > len(bits))
    raise ValueError(f"{gate} has no truth table")


def input_resistance(tech: TechnologyParams, bit: int) -> float:
    """Resistance an input cell contributes to the gate network.

    SHE input current traverses the junction stack and half the Hall channel.
    """
    r = tech.r_ap if bit else tech.r_p
    if tech.kind is TechKind.SHE:
        r += tech.r_she / 2
    return r


def output_resistance(tech: TechnologyParams, state: int) -> float:
    """Output-cell resistance during the gate pulse.

    SHE routes the gate current through the Hall channel, so the value is
    independent of the stored state.
    """
    if tech.kind is TechKind.SHE:
        return tech.r_she
    return tech.r_ap if state else tech.r_p


def parallel_input_resistance(tech: TechnologyParams, input_bits) -> float:
    return 1.0 / sum(1.0 / input_resistance(tech, b) for b in input_bits)


def equivalent_resistance(tech: TechnologyParams, input_bits, output_state: int) -> float:
    """Network resistance: parallel inputs in series with the output cell."""
    if not len(input_bits):
        raise ValueError("equivalent_resistance needs at least one input")
    return parallel_input_resistance(tech, input_bits) + output_resistance(tech, output_state)


def write_voltage(tech: TechnologyParams) -> float:
    """Preset/write voltage: 10% margin over the worst-case resistance."""
    r_worst = tech.r_she if tech.kind is TechKind.SHE else tech.r_ap
    return 1.1 * tech.i_crit * r_worst


@lru_cache(maxsize=None)
def _gate_boundaries(tech: TechnologyParams, gate: GateKind) -> tuple[float, float]:
    """(R_sw, R_nsw) for a logic gate with the output at its preset."""
    preset = GATE_PRESET[gate]
    r_switch, r_hold = [], []
    for bits in itertools.product((0, 1), repeat=gate.arity()):
        r = equivalent_resistance(tech, bits, preset)
        if gate_truth(gate, bits) != preset:
            r_switch.append(r)
        else:
            r_hold.append(r)
    r_sw, r_nsw = max(r_switch), min(r_hold)
    if r_sw >= r_nsw:
        raise ModelInconsistencyError(
            f"{gate.value}: no current threshold separates switching "
            f"(R<={r_sw:.4g}) from holding (R>={r_nsw:.4g}) configurations")
    return r_sw, r_nsw


def derive_gate_voltage(tech: TechnologyParams, gate: GateKind) -> float:
    """Gate drive voltage; the mean of the boundary resistances times i_crit."""
    if gate in (GateKind.WRITE0, GateKind.WRITE1):
        return write_voltage(tech)
    r_sw, r_nsw = _gate_boundaries(tech, gate)
    return tech.i_crit * (r_sw + r_nsw) / 2


@dataclass(frozen=True)
class GateOutcome:
    """Result of one gate or write operation on a single output cell."""

    new_output: int
    switched: bool
    output_current: float  # A
    gate_power: float      # W, during the gate pulse
    preset_power: float    # W, during the preset pulse (0 for plain writes)
    cycle_energy: float    # J, both pulses over t_sw each


def write_outcome(tech: TechnologyParams, target_prior: int, value: int) -> GateOutcome:
    """Unconditional write; current flows whether or not the state changes."""
    if tech.kind is TechKind.SHE:
        r = tech.r_she
    else:
        r = tech.r_ap if target_prior else tech.r_p
    v = write_voltage(tech)
    power = v * v / r
    return GateOutcome(
        new_output=value,
        switched=value != target_prior,
        output_current=v / r,
        gate_power=power,
        preset_power=0.0,
        cycle_energy=power * tech.t_sw,
    )


def gate_outcome(tech: TechnologyParams, gate: GateKind, input_bits,
                 prior_output: int) -> GateOutcome:
    """Preset the output, apply the gate pulse, and threshold the current.

    The output resistance during the pulse is held at its preset value;
    the mid-pulse transition is not modelled. The preset is always drawn
    as a write even when the output already holds the preset bit.
    """
    if gate in (GateKind.WRITE0, GateKind.WRITE1):
        if len(input_bits):
            raise ValueError(f"{gate.value} takes no inputs")
        return write_outcome(tech, prior_output, 1 if gate is GateKind.WRITE1 else 0)
    bits = tuple(int(b) for b in input_bits)
    if len(bits) != gate.arity():
        raise ValueError(f"{gate.value} needs {gate.arity()} inputs, got {len(bits)}")
    preset = GATE_PRESET[gate]
    preset_power = write_outcome(tech, prior_output, preset).gate_power
    v = derive_gate_voltage(tech, gate)
    r_equiv = equivalent_resistance(tech, bits, preset)
    i_out = v / r_equiv
    switched = i_out >= tech.i_crit
    new_output = (1 - preset) if switched else preset
    if new_output != gate_truth(gate, bits):
        raise ModelInconsistencyError(
            f"{gate.value}{bits}: threshold decision ({i_out:.4g} A vs "
            f"i_crit {tech.i_crit:.4g} A) contradicts the truth table")
    gate_power = v * v / r_equiv
    return GateOutcome(
        new_output=new_output,
        switched=switched,
        output_current=i_out,
        gate_power=gate_power,
        preset_power=preset_power,
        cycle_energy=(preset_power + gate_power) * tech.t_sw,
    )


def branch_energies(tech: TechnologyParams, gate: GateKind, input_bits,
                    prior_output: int) -> tuple[np.ndarray, float, float]:
    """Per-cell energy split of one gate operation over t_sw.

    Returns (per-input-cell energies, output-cell gate energy, preset energy).
    Each input cell dissipates its own branch current squared times its own
    resistance; the output cell takes the series term plus the preset write.
    The parts sum to GateOutcome.cycle_energy by circuit identity.
    """
    out = gate_outcome(tech, gate, input_bits, prior_output)
    preset = GATE_PRESET[gate]
    r_par = parallel_input_resistance(tech, input_bits)
    v_par = out.output_current * r_par
    e_in = np.array([
        (v_par / input_resistance(tech, b)) ** 2 * input_resistance(tech, b) * tech.t_sw
        for b in input_bits])
    e_out = out.output_current ** 2 * output_resistance(tech, preset) * tech.t_sw
    e_preset = out.preset_power * tech.t_sw
    return e_in, e_out, e_preset


# --- vectorized lookup tables for the array simulator --------------------

@dataclass(frozen=True)
class OpTable:
    """Per-gate lookup tables indexed by the packed input-bit combination."""

    arity: int
    new_output: np.ndarray    # uint8 [2^arity]
    e_inputs: np.ndarray      # J, [arity, 2^arity]; per input cell over t_sw
    e_output: np.ndarray      # J, [2^arity]; output-cell share of the gate pulse
    e_preset: np.ndarray      # J, [2]; preset write by prior output bit
    e_cycle: np.ndarray       # J, [2, 2^arity]; total by (prior, combo)


@lru_cache(maxsize=None)
def op_table(tech: TechnologyParams, gate: GateKind) -> OpTable:
    if gate in (GateKind.WRITE0, GateKind.WRITE1):
        value = 1 if gate is GateKind.WRITE1 else 0
        e_by_prior = np.array([write_outcome(tech, p, value).cycle_energy for p in (0, 1)])
        return OpTable(
            arity=0,
            new_output=np.full(1, value, dtype=np.uint8),
            e_inputs=np.zeros((0, 1)),
            e_output=np.zeros(1),
            e_preset=e_by_prior,
            e_cycle=e_by_prior[:, None] + np.zeros((2, 1)),
        )
    ar = gate.arity()
    n = 1 << ar
    new_output = np.zeros(n, dtype=np.uint8)
    e_inputs = np.zeros((ar, n))
    e_output = np.zeros(n)
    e_preset = np.array([write_outcome(tech, p, GATE_PRESET[gate]).cycle_energy for p in (0, 1)])
    for combo in range(n):
        bits = tuple((combo >> k) & 1 for k in range(ar))
        e_in, e_out, _ = branch_energies(tech, gate, bits, prior_output=0)
        new_output[combo] = gate_truth(gate, bits)
        e_inputs[:, combo] = e_in
        e_output[combo] = e_out
    e_cycle = e_preset[:, None] + e_inputs.sum(axis=0)[None, :] + e_output[None, :]
    return OpTable(ar, new_output, e_inputs, e_output, e_preset, e_cycle)


@lru_cache(maxsize=None)
def write_table(tech: TechnologyParams) -> np.ndarray:
    """Write energy (J) indexed by the target cell's prior bit."""
    table = np.array([write_outcome(tech, p, 0).cycle_energy for p in (0, 1)])
    table.setflags(write=False)
    return table


# --- diagnostic tables ----------------------------------------------------

def gate_voltage_rows(tech: TechnologyParams) -> list[dict]:
    """Derived drive voltages for every gate, for CSV export."""
    rows = [{
        "gate": "WRITE",
        "voltage_v": write_voltage(tech),
        "r_switch_ohm": "", "r_hold_ohm": "",
    }]
    for gate in LOGIC_GATES:
        r_sw, r_nsw = _gate_boundaries(tech, gate)
        rows.append({
            "gate": gate.value,
            "voltage_v": derive_gate_voltage(tech, gate),
            "r_switch_ohm": r_sw,
            "r_hold_ohm": r_nsw,
        })
    return rows


def gate_current_rows(tech: TechnologyParams) -> list[dict]:
    """Per-input-combination currents and powers for every gate, for CSV export."""
    rows = []
    for gate in LOGIC_GATES:
        preset = GATE_PRESET[gate]
        for bits in itertools.product((0, 1), repeat=gate.arity()):
            out = gate_outcome(tech, gate, bits, prior_output=preset)
            rows.append({
                "gate": gate.value,
                "inputs": "".join(map(str, bits)),
                "preset": preset,
                "r_equiv_ohm": equivalent_resistance(tech, bits, preset),
                "i_out_a": out.output_current,
                "i_crit_a": tech.i_crit,
                "switched": int(out.switched),
                "new_output": out.new_output,
                "gate_power_w": out.gate_power,
                "cycle_energy_j": out.cycle_energy,
            })
    return rows
