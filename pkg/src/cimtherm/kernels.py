"""Benchmark program generators and their independent oracles.

Three benchmark families:

* INV thermal viruses: a stream of single-input inverters, either on fixed
  operand rows (worst case) or rotating through all rows (thermal leveling).
* VMUL: column-parallel vector-matrix multiply; matrix columns map one per
  array column, elements are stored bit-serial down the column, and partial
  products accumulate through ripple-carry full adders built either from
  majority gates ('mix') or purely from NOR2 ('nor').
* Hopfield networks build on the same machinery (see hopfield module).

Utilization counts active columns, the lane axis of every kernel's dominant
direction; data is seeded and deterministic.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .arraysim import Axis, BulkSet, GateOp, Instruction, LaneSet
from .electrical import GateKind


class KernelError(ValueError):
    """Problem does not fit the array or parameters are inconsistent."""


@dataclass
class KernelBuild:
    """A generated program plus everything needed to execute and audit it."""

    program: list[Instruction]
    init_bits: np.ndarray
    lanes: LaneSet
    utilization_realized: float
    utilization_axis: str
    metadata: dict = field(default_factory=dict)


def active_lane_count(utilization: float, lane_total: int) -> int:
    n = math.ceil(utilization * lane_total)
    if n < 1:
        raise KernelError(f"utilization {utilization} selects no lane of {lane_total}")
    if n > lane_total:
        raise KernelError(f"utilization {utilization} exceeds available lanes")
    return n


# --- INV -------------------------------------------------------------------

def gen_inv(rows: int, cols: int, utilization: float = 1.0, *,
            fixed: bool = True) -> KernelBuild:
    """Column-parallel inverter stream.

    Fixed form runs every cycle on the same centered operand-row pair;
    the shifting form advances both operand rows by one (mod rows) each
    cycle so every row is an input once and an output once per rotation.
    Data is a checkerboard, which makes the per-lane energy mix identical
    across lanes and the shifting form's per-row deposit exactly uniform.
    """
    if rows < 2:
        raise KernelError("INV needs at least two rows")
    n_lanes = active_lane_count(utilization, cols)
    lanes = LaneSet.span(n_lanes)
    init = ((np.arange(rows)[:, None] + np.arange(cols)[None, :]) & 1).astype(np.uint8)
    if fixed:
        row_in = rows // 2
        program: list[Instruction] = [
            GateOp(Axis.COL, GateKind.NOT, (row_in,), row_in + 1, lanes)]
    else:
        program = [
            GateOp(Axis.COL, GateKind.NOT, (r,), (r + 1) % rows, lanes)
            for r in range(rows)]
    return KernelBuild(
        program=program,
        init_bits=init,
        lanes=lanes,
        utilization_realized=n_lanes / cols,
        utilization_axis="cols",
        metadata={"kind": "INVfx" if fixed else "INVshft",
                  "active_lanes": n_lanes, "rows": rows, "cols": cols},
    )


# --- full-adder macros -------------------------------------------------------

@dataclass(frozen=True)
class AdderScratch:
    """Scratch rows shared by every full-adder invocation of one program."""

    zero_a: int      # constant-0 rows; two so no instruction repeats an operand
    zero_b: int
    carry: tuple[int, int]  # ping-pong carry cells
    aux: tuple[int, ...]    # 2 rows for 'mix', 7 for 'nor'

    @staticmethod
    def rows_needed(adder: str) -> int:
        return 4 + (2 if adder == "mix" else 7)


def emit_full_adder(ops: list[Instruction], adder: str, lanes: LaneSet,
                    a: int, b: int, cin: int, sum_out: int, cout: int,
                    scratch: AdderScratch) -> None:
    """Append one full-adder bit.

    mix: carry by MAJ3, sum by MAJ5 over the addends and two inverted-carry
    copies (two physical copies keep operand cells distinct).
    nor: the classic nine-gate NOR2 network.
    """
    col = Axis.COL
    if adder == "mix":
        nc1, nc2 = scratch.aux
        ops.append(GateOp(col, GateKind.MAJ3, (a, b, cin), cout, lanes))
        ops.append(GateOp(col, GateKind.NOT, (cout,), nc1, lanes))
        ops.append(GateOp(col, GateKind.NOT, (cout,), nc2, lanes))
        ops.append(GateOp(col, GateKind.MAJ5, (a, b, cin, nc1, nc2), sum_out, lanes))
    elif adder == "nor":
        n1, n2, n3, n4, n5, n6, n7 = scratch.aux
        ops.append(GateOp(col, GateKind.NOR2, (a, b), n1, lanes))
        ops.append(GateOp(col, GateKind.NOR2, (a, n1), n2, lanes))
        ops.append(GateOp(col, GateKind.NOR2, (b, n1), n3, lanes))
        ops.append(GateOp(col, GateKind.NOR2, (n2, n3), n4, lanes))     # xnor(a, b)
        ops.append(GateOp(col, GateKind.NOR2, (n4, cin), n5, lanes))
        ops.append(GateOp(col, GateKind.NOR2, (n4, n5), n6, lanes))
        ops.append(GateOp(col, GateKind.NOR2, (cin, n5), n7, lanes))
        ops.append(GateOp(col, GateKind.NOR2, (n6, n7), sum_out, lanes))
        ops.append(GateOp(col, GateKind.NOR2, (n1, n5), cout, lanes))
    else:
        raise KernelError(f"unknown adder kind {adder!r}")


def emit_ripple_add(ops: list[Instruction], adder: str, lanes: LaneSet,
                    src_rows, addend_of, dst_rows, scratch: AdderScratch) -> None:
    """dst = src + addend over the full register width.

    addend_of(p) names the addend row for bit p (a masked-operand row, a
    sign-extension row, or a constant-zero row). Carry ripples through the
    ping-pong carry cells; bit 0 takes its carry-in from a zero row.
    """
    width = len(src_rows)
    for p in range(width):
        cin = scratch.zero_b if p == 0 else scratch.carry[(p - 1) % 2]
        emit_full_adder(ops, adder, lanes,
                        a=src_rows[p], b=addend_of(p), cin=cin,
                        sum_out=dst_rows[p], cout=scratch.carry[p % 2],
                        scratch=scratch)


def decode_unsigned(bits: np.ndarray, bit_rows, cols) -> np.ndarray:
    """Little-endian unsigned integers read down the given rows."""
    weights = 2 ** np.arange(len(bit_rows), dtype=np.int64)
    return (bits[np.ix_(list(bit_rows), list(cols))].astype(np.int64)
            * weights[:, None]).sum(axis=0)


def decode_signed(bits: np.ndarray, bit_rows, cols) -> np.ndarray:
    """Little-endian two's-complement integers read down the given rows."""
    raw = decode_unsigned(bits, bit_rows, cols)
    span = np.int64(1) << len(bit_rows)
    return np.where(raw >= span >> 1, raw - span, raw)


def int_to_bits(values: np.ndarray, width: int) -> np.ndarray:
    """uint8 bit planes [width, len(values)], little-endian two's complement."""
    vals = np.asarray(values, dtype=np.int64) & ((np.int64(1) << width) - 1)
    return ((vals[None, :] >> np.arange(width)[:, None]) & 1).astype(np.uint8)


# --- VMUL --------------------------------------------------------------------

def vmul_oracle(matrix: np.ndarray, vector: np.ndarray) -> np.ndarray:
    """Exact integer vector-matrix product; the verification reference."""
    matrix = np.asarray(matrix, dtype=np.int64)
    vector = np.asarray(vector, dtype=np.int64)
    if matrix.ndim != 2 or vector.ndim != 1 or matrix.shape[0] != vector.shape[0]:
        raise KernelError(f"shapes do not conform: {matrix.shape} x {vector.shape}")
    return vector @ matrix


def max_vmul_rows(rows: int, bit_width: int, adder: str) -> int:
    """Largest vector length whose operands, scratch, and accumulator fit."""
    fixed = AdderScratch.rows_needed(adder) + bit_width  # scratch + mask rows
    n = (rows - fixed) // (2 * bit_width)  # vector + matrix bit rows
    while n >= 1:
        acc = 2 * (2 * bit_width + (math.ceil(math.log2(n)) if n > 1 else 0))
        if 2 * n * bit_width + fixed + acc <= rows:
            return n
        n -= 1
    raise KernelError(f"array of {rows} rows cannot hold any {bit_width}-bit product")


def gen_vmul(rows: int, cols: int, utilization: float = 1.0, *,
             bit_width: int = 4, matrix_rows: int | None = None,
             seed: int = 0, adder: str = "mix") -> KernelBuild:
    """Column-parallel vector-matrix multiply program with its data and oracle.

    One matrix column per active array column; the shared vector is
    replicated across the active columns as bit rows. Each partial product
    AND-masks the element bits with one vector bit and ripple-adds the
    shifted result into the ping-pong accumulator at the bottom of the
    array.
    """
    w = bit_width
    m_cols = active_lane_count(utilization, cols)
    n = matrix_rows if matrix_rows is not None else max_vmul_rows(rows, w, adder)
    if n < 1:
        raise KernelError("matrix_rows must be >= 1")
    acc_width = 2 * w + (math.ceil(math.log2(n)) if n > 1 else 0)

    # layout: vector and matrix bit rows on top, scratch + accumulator at the bottom
    vec_row = lambda i, b: i * w + b
    mat_row = lambda i, k: n * w + i * w + k
    top = 2 * n * w
    cursor = rows
    def take(count: int) -> list[int]:
        nonlocal cursor
        cursor -= count
        return list(range(cursor, cursor + count))
    acc1 = take(acc_width)
    acc0 = take(acc_width)
    aux_n = 2 if adder == "mix" else 7
    aux = take(aux_n)
    carry = take(2)
    zeros = take(2)
    t_rows = take(w)
    if cursor < top:
        raise KernelError(
            f"{n}x{m_cols} {w}-bit product does not fit {rows} rows "
            f"(needs {top + (rows - cursor)})")
    scratch = AdderScratch(zero_a=zeros[0], zero_b=zeros[1],
                           carry=(carry[0], carry[1]), aux=tuple(aux))

    rng = np.random.default_rng(seed)
    matrix = rng.integers(0, 1 << w, size=(n, m_cols), dtype=np.int64)
    vector = rng.integers(0, 1 << w, size=n, dtype=np.int64)
    expected = vmul_oracle(matrix, vector)

    init = np.zeros((rows, cols), dtype=np.uint8)
    lanes = LaneSet.span(m_cols)
    lane_idx = lanes.indices
    for i in range(n):
        for b in range(w):
            init[vec_row(i, b), lane_idx] = (vector[i] >> b) & 1
        init[np.ix_([mat_row(i, k) for k in range(w)], lane_idx)] = int_to_bits(matrix[i], w)

    ops: list[Instruction] = []
    for row in acc0:  # self-resetting so cyclic re-execution stays correct
        ops.append(BulkSet(Axis.ROW, row, lanes, 0))
    regions = (acc0, acc1)
    adds = 0
    for i in range(n):
        for b in range(w):
            for k in range(w):
                ops.append(GateOp(Axis.COL, GateKind.AND2,
                                  (vec_row(i, b), mat_row(i, k)), t_rows[k], lanes))
            src, dst = regions[adds % 2], regions[(adds + 1) % 2]
            def addend(p, _b=b):
                if _b <= p < _b + w:
                    return t_rows[p - _b]
                return scratch.zero_a
            emit_ripple_add(ops, adder, lanes, src, addend, dst, scratch)
            adds += 1

    result_rows = regions[adds % 2]
    return KernelBuild(
        program=ops,
        init_bits=init,
        lanes=lanes,
        utilization_realized=m_cols / cols,
        utilization_axis="cols",
        metadata={
            "kind": f"VMUL{adder}",
            "matrix": matrix, "vector": vector, "expected": expected,
            "result_rows": result_rows, "acc_width": acc_width,
            "bit_width": w, "vector_length": n, "active_lanes": m_cols,
        },
    )


def decode_vmul_result(build: KernelBuild, bits: np.ndarray) -> np.ndarray:
    return decode_unsigned(bits, build.metadata["result_rows"], build.lanes.indices)
