"""Bipolar Hopfield-network kernels: oracle, array layouts, and program plans.

One network iteration updates a single neuron: every column computes its dot
product against the current state in parallel, the result is thresholded
against the bias, and the chosen neuron's state is rewritten. The bipolar
dot product is computed as a masked integer sum, dot_j = 2*S_j - R_j with
S_j = sum_i w_ij * x_i over the 0/1-encoded state and R_j the column weight
sum, so the in-array test reduces to the sign of D_j = 2*S_j - (R_j + b_j),
with R_j + b_j folded into a per-column constant.

Each neuron's state bit occupies one full row, replicated across the active
columns, so every column can mask its own weight bits against it; that also
makes the state row a natural bulk-set target. A multi-array plan splits the
weight rows across several arrays computing partial sums concurrently, with
one extra array combining partials and thresholding; the partial-sum
transfer between arrays is modelled as a zero-cost state injection.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .arraysim import (ArraySpec, Axis, BulkSet, GateOp, Injection, LaneSet,
                       MultiArrayPlan, Phase, SerialWrite, ArrayState, step)
from .electrical import GateKind
from .kernels import (AdderScratch, KernelError, decode_signed, emit_ripple_add,
                      int_to_bits)
from .tech import TechnologyParams


@dataclass(frozen=True)
class HopfieldInstance:
    """Symmetric zero-diagonal integer weights, integer bias, bipolar state."""

    weights: np.ndarray  # (n, n) int
    bias: np.ndarray     # (n,) int
    initial_state: np.ndarray  # (n,) values in {-1, +1}

    def __post_init__(self) -> None:
        w = np.asarray(self.weights)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise KernelError("weights must be square")
        if not np.array_equal(w, w.T):
            raise KernelError("weights must be symmetric")
        if np.any(np.diag(w) != 0):
            raise KernelError("weight diagonal must be zero")
        if self.bias.shape != (w.shape[0],) or self.initial_state.shape != (w.shape[0],):
            raise KernelError("bias and state must have one entry per neuron")
        if not np.all(np.abs(self.initial_state) == 1):
            raise KernelError("state entries must be -1 or +1")

    @property
    def n(self) -> int:
        return self.weights.shape[0]


def hopfield_energy(instance: HopfieldInstance, state: np.ndarray) -> float:
    v = state.astype(np.int64)
    w = instance.weights.astype(np.int64)
    return float(-0.5 * v @ w @ v + instance.bias.astype(np.int64) @ v)


def random_instance(n: int, bit_width: int = 4, seed: int = 0) -> HopfieldInstance:
    """Seeded random instance, adjusted so no update ever lands on a tie.

    D_j = 2*S_j - (R_j + b_j) is even minus (R_j + b_j); forcing R_j + b_j
    odd keeps D_j odd, so the sign test is always strict.
    """
    if n < 2:
        raise KernelError("need at least two neurons")
    rng = np.random.default_rng(seed)
    lim = 1 << (bit_width - 1)
    upper = np.triu(rng.integers(-lim, lim, size=(n, n), dtype=np.int64), k=1)
    weights = upper + upper.T
    bias = rng.integers(-lim * 2, lim * 2, size=n, dtype=np.int64)
    parity = (weights.sum(axis=0) + bias) & 1
    bias = bias + (1 - parity)
    state = rng.choice(np.array([-1, 1], dtype=np.int64), size=n)
    return HopfieldInstance(weights, bias, state)


@dataclass(frozen=True)
class UpdateRecord:
    neuron: int
    dot: int
    new_value: int   # -1 or +1
    changed: bool


@dataclass
class OracleRun:
    records: list[UpdateRecord]
    states: np.ndarray      # (iterations + 1, n); states[t] feeds iteration t
    energies: list[float]   # after each update
    converged: bool


def hopfield_oracle(instance: HopfieldInstance, order=None,
                    max_sweeps: int = 10_000) -> OracleRun:
    """Asynchronous updates in the given order until a full sweep is quiet.

    Ties keep the current state, which together with the symmetric
    zero-diagonal weights guarantees a non-increasing energy and
    convergence.
    """
    n = instance.n
    order = list(range(n)) if order is None else list(order)
    if sorted(order) != list(range(n)):
        raise KernelError("update order must be a permutation of the neurons")
    w = instance.weights.astype(np.int64)
    theta = instance.bias.astype(np.int64)
    v = instance.initial_state.astype(np.int64).copy()
    records: list[UpdateRecord] = []
    states = [v.copy()]
    energies: list[float] = []
    converged = False
    for _ in range(max_sweeps):
        changed = False
        for i in order:
            dot = int(w[:, i] @ v)
            if dot > theta[i]:
                new = 1
            elif dot < theta[i]:
                new = -1
            else:
                new = int(v[i])
            records.append(UpdateRecord(i, dot, new, new != v[i]))
            if new != v[i]:
                v[i] = new
                changed = True
            states.append(v.copy())
            energies.append(hopfield_energy(instance, v))
        if not changed:
            converged = True
            break
    return OracleRun(records, np.array(states), energies, converged)


# --- layouts -----------------------------------------------------------------

@dataclass(frozen=True)
class ChunkLayout:
    """Row assignment for one array holding a slice of the weight rows."""

    neurons: tuple[int, ...]          # global neuron indices resident here
    state_rows: dict[int, int]        # global neuron -> state row
    weight_rows: dict[int, tuple[int, ...]]
    acc: tuple[tuple[int, ...], tuple[int, ...]]
    t_rows: tuple[int, ...]
    scratch: AdderScratch
    sgn_stage: int
    h_row: int
    s_region: tuple[int, ...]         # rows holding the partial sum after the spine
    neg_rows: tuple[int, ...] = ()    # threshold constant (threshold array only)
    partial_rows: tuple[tuple[int, ...], ...] = ()  # staging blocks (threshold array)
    d_rows: tuple[int, ...] = ()      # thresholded value (threshold array only)


def _acc_width(n: int, bit_width: int) -> int:
    return bit_width + math.ceil(math.log2(n)) + 3


def min_signed_width(values: np.ndarray) -> int:
    """Smallest two's-complement width holding every value."""
    lo, hi = int(np.min(values)), int(np.max(values))
    w_hi = hi.bit_length() + 1 if hi >= 0 else 1
    w_lo = (-lo - 1).bit_length() + 1 if lo < 0 else 1
    return max(w_hi, w_lo, 2)


def _bottom_allocator(rows: int):
    cursor = rows

    def take(count: int) -> tuple[int, ...]:
        nonlocal cursor
        cursor -= count
        if cursor < 0:
            raise KernelError(f"layout exceeds {rows} rows")
        return tuple(range(cursor, cursor + count))

    return take, lambda: cursor


def max_nn_neurons(rows: int, cols: int, bit_width: int, adder: str) -> int:
    """Largest single-array network: weights, state, constants, and scratch."""
    aux = 2 if adder == "mix" else 7
    fixed = bit_width + aux + 2 + 2 + 2  # masks, fa scratch, carries, zeros, stage rows
    n = min(cols, rows)
    while n >= 2:
        if n * (1 + bit_width) + fixed + 3 * _acc_width(n, bit_width) <= rows:
            return n
        n -= 1
    raise KernelError(f"no network fits a {rows}x{cols} array at {bit_width} bits")


def _chunk_layout(rows: int, neurons, bit_width: int, adder: str, acc_width: int,
                  with_threshold: bool, n_partials: int = 0) -> ChunkLayout:
    take, cursor = _bottom_allocator(rows)
    acc1 = take(acc_width)
    acc0 = take(acc_width)
    neg = take(acc_width) if with_threshold else ()
    partials = tuple(take(acc_width) for _ in range(n_partials))
    aux = take(2 if adder == "mix" else 7)
    carry = take(2)
    zeros = take(2)
    stage = take(2)
    t_rows = take(bit_width)
    scratch = AdderScratch(zero_a=zeros[0], zero_b=zeros[1],
                           carry=(carry[0], carry[1]), aux=aux)
    neurons = tuple(neurons)
    m = len(neurons)
    top_needed = m * (1 + bit_width)
    if top_needed > cursor():
        raise KernelError(
            f"{m} neurons at {bit_width} bits need {top_needed} data rows; "
            f"only {cursor()} remain of {rows}")
    state_rows = {j: slot for slot, j in enumerate(neurons)}
    weight_rows = {j: tuple(m + slot * bit_width + k for k in range(bit_width))
                   for slot, j in enumerate(neurons)}
    regions = (acc0, acc1)
    s_region = regions[m % 2]  # one ripple add per resident neuron
    return ChunkLayout(
        neurons=neurons, state_rows=state_rows, weight_rows=weight_rows,
        acc=regions, t_rows=t_rows, scratch=scratch,
        sgn_stage=stage[0], h_row=stage[1], s_region=s_region,
        neg_rows=neg, partial_rows=partials, d_rows=(),
    )


# --- program emission ---------------------------------------------------------

def _emit_vmm(layout: ChunkLayout, lanes: LaneSet, adder: str, acc_width: int):
    """Masked-sum spine: reset, then per resident neuron mask + ripple add."""
    ops = []
    for row in layout.acc[0]:
        ops.append(BulkSet(Axis.ROW, row, lanes, 0))
    adds = 0
    w = len(layout.t_rows)
    for j in layout.neurons:
        x_row = layout.state_rows[j]
        w_rows = layout.weight_rows[j]
        for k in range(w):
            ops.append(GateOp(Axis.COL, GateKind.AND2, (x_row, w_rows[k]),
                              layout.t_rows[k], lanes))
        src, dst = layout.acc[adds % 2], layout.acc[(adds + 1) % 2]

        def addend(p):
            return layout.t_rows[p] if p < w else layout.t_rows[w - 1]  # sign extend

        emit_ripple_add(ops, adder, lanes, src, addend, dst, layout.scratch)
        adds += 1
    assert layout.acc[adds % 2] == layout.s_region
    return ops


def _emit_combine_threshold(layout: ChunkLayout, lanes: LaneSet, adder: str,
                            partial_blocks, s_rows) -> tuple[list, tuple[int, ...]]:
    """Optionally sum staged partials, then D = 2*S + NEG into the spare region."""
    ops: list = []
    cur = list(s_rows) if s_rows else list(partial_blocks[0])
    dst_index = 0
    start = 0 if s_rows else 1
    for block in partial_blocks[start:]:
        dst = layout.acc[dst_index]
        cur_rows = list(cur)
        emit_ripple_add(ops, adder, lanes, cur_rows,
                        lambda p, _b=tuple(block): _b[p], dst, layout.scratch)
        cur = list(dst)
        dst_index ^= 1
    if s_rows:
        # single array: S already sits in one accumulator region
        dst_index = 1 - layout.acc.index(tuple(s_rows)) if tuple(s_rows) in layout.acc else dst_index
    d_rows = layout.acc[dst_index]
    cur_rows = list(cur)
    shifted = [layout.scratch.zero_a] + cur_rows[:-1]  # doubling = left shift

    emit_ripple_add(ops, adder, lanes, shifted,
                    lambda p: layout.neg_rows[p], d_rows, layout.scratch)
    return ops, tuple(d_rows)


def _emit_update(layout: ChunkLayout, lanes: LaneSet, update: str, neuron: int,
                 new_bit: int, sign_source: int | None) -> list:
    row = layout.state_rows[neuron]
    if update == "blk":
        return [BulkSet(Axis.ROW, row, lanes, new_bit)]
    if update == "rest":
        return [SerialWrite(row, int(c), new_bit) for c in lanes]
    if update == "noblk":
        # in-array broadcast: stage the inverted sign along a helper row with
        # per-cell inverters, then invert into the state row
        assert sign_source is not None
        others = [int(c) for c in lanes if c != neuron]
        ops = [GateOp(Axis.COL, GateKind.NOT, (sign_source,), layout.h_row,
                      LaneSet([neuron]))]
        for c in others:
            ops.append(GateOp(Axis.ROW, GateKind.NOT, (neuron,), c, LaneSet([layout.h_row])))
        ops.append(GateOp(Axis.COL, GateKind.NOT, (layout.h_row,), row, LaneSet(others)))
        ops.append(GateOp(Axis.COL, GateKind.NOT, (sign_source,), row, LaneSet([neuron])))
        return ops
    raise KernelError(f"unknown update style {update!r}")


def gen_hopfield(rows: int, cols: int, tech: TechnologyParams,
                 instance: HopfieldInstance, *, adder: str = "mix",
                 update: str = "blk", n_chunks: int = 1,
                 max_iterations: int | None = None, order=None) -> MultiArrayPlan:
    """Program plan realizing the oracle trajectory update-for-update.

    n_chunks = 1 yields a single self-contained array; n_chunks > 1 splits
    the weight rows across that many concurrent arrays plus one
    combine/threshold array, with phase barriers per iteration.
    """
    n = instance.n
    if n > cols:
        raise KernelError(f"{n} neurons exceed {cols} columns")
    bit_width = min_signed_width(instance.weights)
    acc_width = _acc_width(n, bit_width)
    lanes = LaneSet.span(n)
    oracle = hopfield_oracle(instance, order=order)
    records = oracle.records
    if max_iterations is not None:
        records = records[:max_iterations]
    if not records:
        raise KernelError("oracle produced no iterations")

    multi = n_chunks > 1
    chunks = [c.tolist() for c in np.array_split(np.arange(n), n_chunks)]
    layouts = [
        _chunk_layout(rows, chunk, bit_width, adder, acc_width,
                      with_threshold=not multi)
        for chunk in chunks]
    if multi:
        thr_layout = _chunk_layout(rows, (), bit_width, adder, acc_width,
                                   with_threshold=True, n_partials=n_chunks)
        thr_index = n_chunks
        arrays = [ArraySpec(rows, cols, tech) for _ in range(n_chunks + 1)]
    else:
        thr_layout = layouts[0]
        thr_index = 0
        arrays = [ArraySpec(rows, cols, tech)]

    # constant and operand initial bits
    x0 = ((instance.initial_state + 1) // 2).astype(np.uint8)
    neg_const = -(instance.weights.sum(axis=0) + instance.bias)
    init_bits = [np.zeros((rows, cols), dtype=np.uint8) for _ in arrays]
    lane_idx = lanes.indices
    for a, layout in enumerate(layouts):
        bits = init_bits[a]
        for j in layout.neurons:
            bits[layout.state_rows[j], lane_idx] = x0[j]
            bits[np.ix_(list(layout.weight_rows[j]), lane_idx)] = int_to_bits(
                instance.weights[j], bit_width)
    init_bits[thr_index][np.ix_(list(thr_layout.neg_rows), lane_idx)] = int_to_bits(
        neg_const, acc_width)

    # shared per-iteration segments (instruction lists reused across iterations)
    vmm_segments = {a: _emit_vmm(layout, lanes, adder, acc_width)
                    for a, layout in enumerate(layouts)}
    if multi:
        combine_ops, d_rows = _emit_combine_threshold(
            thr_layout, lanes, adder, thr_layout.partial_rows, s_rows=None)
    else:
        combine_ops, d_rows = _emit_combine_threshold(
            thr_layout, lanes, adder, (), s_rows=layouts[0].s_region)
        vmm_segments[0] = vmm_segments[0] + combine_ops
    sign_row = d_rows[-1]

    chunk_of = {j: a for a, chunk in enumerate(chunks) for j in chunk}
    weights64 = instance.weights.astype(np.int64)

    phases: list[Phase] = []
    iterations_meta: list[dict] = []
    for t, rec in enumerate(records):
        start = len(phases)
        state_t = oracle.states[t]
        x_t = ((state_t + 1) // 2).astype(np.int64)
        if multi:
            phases.append(Phase(dict(vmm_segments), label=f"it{t}/vmm"))
            partial_inj = []
            for a, chunk in enumerate(chunks):
                s_vals = weights64[chunk].T @ x_t[chunk]
                partial_inj.append(Injection(
                    thr_index, np.array(thr_layout.partial_rows[a]),
                    lane_idx, int_to_bits(s_vals, acc_width)))
            phases.append(Phase({thr_index: combine_ops}, partial_inj,
                                label=f"it{t}/threshold"))
        else:
            phases.append(Phase({0: vmm_segments[0]}, label=f"it{t}/vmm+threshold"))

        home = chunk_of[rec.neuron]
        new_bit = (rec.new_value + 1) // 2
        d_val = rec.dot - int(instance.bias[rec.neuron])
        if update == "noblk" and d_val == 0 and new_bit != 1:
            raise KernelError(
                f"iteration {t}: tie at neuron {rec.neuron} is unrepresentable "
                "with gate-based updates; use a tie-free instance")
        inj = []
        if multi and update == "noblk":
            sign_bit = np.array([[1 if d_val < 0 else 0]], dtype=np.uint8)
            inj.append(Injection(home, np.array([layouts[home].sgn_stage]),
                                 np.array([rec.neuron]), sign_bit))
            sign_source = layouts[home].sgn_stage
        else:
            sign_source = sign_row if not multi else None
        update_ops = _emit_update(layouts[home], lanes, update, rec.neuron,
                                  new_bit, sign_source)
        phases.append(Phase({home: update_ops}, inj, label=f"it{t}/update"))
        iterations_meta.append({
            "neuron": rec.neuron, "dot": rec.dot, "new_value": rec.new_value,
            "d_value": d_val, "phase_start": start,
            "phase_count": len(phases) - start,
        })

    return MultiArrayPlan(
        arrays=arrays,
        init_bits=init_bits,
        phases=phases,
        metadata={
            "kind": "hopfield", "update": update, "adder": adder,
            "neurons": n, "bit_width": bit_width, "acc_width": acc_width,
            "n_chunks": n_chunks, "chunks": chunks,
            "layouts": layouts, "threshold_array": thr_index,
            "d_rows": d_rows, "sign_row": sign_row,
            "lanes": lanes, "instance": instance,
            "iterations": iterations_meta,
            "oracle_converged": oracle.converged,
            "iterations_available": len(oracle.records),
            "utilization_realized": n / cols,
            "utilization_axis": "cols",
        },
    )


def execute_plan_functional(plan: MultiArrayPlan):
    """Step through the plan iteration by iteration, decoding checkpoints.

    Yields one dict per iteration with the in-array thresholded values and
    the decoded state vector, for lockstep comparison against the oracle.
    """
    meta = plan.metadata
    states = [ArrayState.from_bits(b.copy(), spec.tech)
              for b, spec in zip(plan.init_bits, plan.arrays)]
    lanes: LaneSet = meta["lanes"]
    lane_idx = lanes.indices
    layouts = meta["layouts"]
    chunks = meta["chunks"]
    thr = meta["threshold_array"]
    for it in meta["iterations"]:
        for phase in plan.phases[it["phase_start"]:it["phase_start"] + it["phase_count"]]:
            for inj in phase.injections:
                states[inj.array].bits[np.ix_(inj.rows, inj.cols)] = inj.values
            for a, segment in phase.segments.items():
                for instr in segment:
                    step(states[a], instr)
        d_vec = decode_signed(states[thr].bits, meta["d_rows"], lane_idx)
        partials = [
            decode_signed(states[a].bits, layouts[a].s_region, lane_idx)
            for a in range(len(chunks))]
        state_bits = np.zeros(meta["neurons"], dtype=np.int64)
        for a, chunk in enumerate(chunks):
            for j in chunk:
                row = layouts[a].state_rows[j]
                cells = states[a].bits[row, lane_idx]
                if cells.min() != cells.max():
                    raise AssertionError(f"state row {j} lost replication")
                state_bits[j] = cells[0]
        yield {
            "neuron": it["neuron"],
            "d_vector": d_vec,
            "partials": partials,
            "state": 2 * state_bits - 1,
        }
