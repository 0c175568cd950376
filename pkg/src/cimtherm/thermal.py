"""Steady-state finite-difference thermal model over the array footprint.

Two node layers cover exactly the array: one in the active silicon (a node
per cell, or per coalesced supernode) and one at the top of the bulk die.
Lateral boundaries are adiabatic. Every bulk node reaches ambient through
the interface-material and baseplate slabs over its own footprint plus its
share of the lumped convective resistance, so the parallel combination
reproduces the lumped value exactly. Solving G*T = P yields per-node
temperature rise above ambient.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sparse
import scipy.sparse.linalg as spla
from scipy.fft import dctn, idctn

from .tech import TechnologyParams, ThermalStack


class SolverError(RuntimeError):
    """Iterative solve failed to reach the requested residual."""


@dataclass(frozen=True)
class ThermalGrid:
    """Node geometry plus the edge conductances of the two-layer stencil."""

    ny: int            # nodes along the column direction (rows / coalesce)
    nx: int            # nodes along the row direction (cols / coalesce)
    pitch_x: float     # supernode pitch, m
    pitch_y: float
    dz_active: float
    coalesce: int
    stack: ThermalStack
    cell_area_m2: float  # single-cell footprint (not supernode)

    # edge conductances, W/K
    gx_active: float
    gy_active: float
    gx_bulk: float
    gy_bulk: float
    g_vertical: float
    g_ambient: float

    @property
    def nodes_per_layer(self) -> int:
        return self.ny * self.nx

    @property
    def node_count(self) -> int:
        return 2 * self.ny * self.nx


def build_grid(rows: int, cols: int, tech: TechnologyParams, stack: ThermalStack,
               coalesce_factor: int = 1) -> ThermalGrid:
    """Map the cell grid onto thermal nodes, optionally coalescing c x c cells."""
    c = coalesce_factor
    if c < 1 or rows % c or cols % c:
        raise ValueError(f"coalesce factor {c} must divide the {rows}x{cols} array")
    ny, nx = rows // c, cols // c
    dx, dy, dz = c * tech.cell_dx, c * tech.cell_dy, tech.cell_dz
    area = dx * dy
    n = ny * nx
    r_ambient = (stack.tim_dz / (stack.k_tim * area)
                 + stack.cu_dz / (stack.k_cu * area)
                 + n * stack.r_convective)
    return ThermalGrid(
        ny=ny, nx=nx, pitch_x=dx, pitch_y=dy, dz_active=dz, coalesce=c,
        stack=stack, cell_area_m2=tech.cell_area,
        gx_active=stack.k_si * dy * dz / dx,
        gy_active=stack.k_si * dx * dz / dy,
        gx_bulk=stack.k_si * dy * stack.bulk_si_dz / dx,
        gy_bulk=stack.k_si * dx * stack.bulk_si_dz / dy,
        g_vertical=stack.k_si * area / stack.bulk_si_dz,
        g_ambient=1.0 / r_ambient,
    )


@dataclass
class ConductanceSystem:
    """Sparse symmetric conductance matrix with its grid bookkeeping.

    Node ordering: active layer row-major, then bulk layer row-major.
    """

    grid: ThermalGrid
    matrix: sparse.csr_matrix


def assemble_conductance(grid: ThermalGrid) -> ConductanceSystem:
    ny, nx = grid.ny, grid.nx
    n = ny * nx
    idx = np.arange(n).reshape(ny, nx)

    rows_l: list[np.ndarray] = []
    cols_l: list[np.ndarray] = []
    vals_l: list[np.ndarray] = []
    diag = np.zeros(2 * n)

    def add_edges(a: np.ndarray, b: np.ndarray, g: float) -> None:
        a, b = a.ravel(), b.ravel()
        rows_l.extend((a, b))
        cols_l.extend((b, a))
        vals_l.extend((np.full(a.size, -g), np.full(a.size, -g)))
        np.add.at(diag, a, g)
        np.add.at(diag, b, g)

    for layer, (gx, gy) in enumerate(((grid.gx_active, grid.gy_active),
                                      (grid.gx_bulk, grid.gy_bulk))):
        off = layer * n
        if nx > 1:
            add_edges(off + idx[:, :-1], off + idx[:, 1:], gx)
        if ny > 1:
            add_edges(off + idx[:-1, :], off + idx[1:, :], gy)
    add_edges(idx, n + idx, grid.g_vertical)
    diag[n:] += grid.g_ambient

    all_idx = np.arange(2 * n)
    rows_l.append(all_idx)
    cols_l.append(all_idx)
    vals_l.append(diag)
    matrix = sparse.csr_matrix(
        (np.concatenate(vals_l), (np.concatenate(rows_l), np.concatenate(cols_l))),
        shape=(2 * n, 2 * n))
    return ConductanceSystem(grid, matrix)


@dataclass
class TemperatureField:
    """Per-node temperature rise above ambient, both layers."""

    grid: ThermalGrid
    rise_active: np.ndarray  # K, [ny, nx]
    rise_bulk: np.ndarray    # K, [ny, nx]

    @property
    def rise_max(self) -> float:
        return float(self.rise_active.max())

    @property
    def rise_min(self) -> float:
        return float(self.rise_active.min())

    @property
    def t_max_c(self) -> float:
        return self.rise_max + self.grid.stack.ambient_c

    @property
    def t_min_c(self) -> float:
        return self.rise_min + self.grid.stack.ambient_c


def _coalesce_power(grid: ThermalGrid, power_cells: np.ndarray) -> np.ndarray:
    c = grid.coalesce
    if power_cells.shape != (grid.ny * c, grid.nx * c):
        raise ValueError(
            f"power map shape {power_cells.shape} does not match "
            f"{grid.ny * c}x{grid.nx * c} cells")
    if np.any(power_cells < 0):
        raise ValueError("negative cell power")
    return power_cells.reshape(grid.ny, c, grid.nx, c).sum(axis=(1, 3))


def _solve_modes(grid: ThermalGrid, p_nodes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Exact direct solve in the cosine eigenbasis of the adiabatic stencil.

    Both per-layer lateral operators share the DCT-II eigenvectors because
    the coefficients are spatially uniform, so each spatial mode reduces to
    a 2x2 system in (active, bulk).
    """
    ny, nx = grid.ny, grid.nx
    ky = np.arange(ny)[:, None]
    kx = np.arange(nx)[None, :]
    sy = np.sin(np.pi * ky / (2 * ny)) ** 2
    sx = np.sin(np.pi * kx / (2 * nx)) ** 2
    lam_a = 4 * grid.gy_active * sy + 4 * grid.gx_active * sx
    lam_b = 4 * grid.gy_bulk * sy + 4 * grid.gx_bulk * sx
    gv, ga = grid.g_vertical, grid.g_ambient
    det = (lam_a + gv) * (lam_b + gv + ga) - gv * gv
    p_hat = dctn(p_nodes, type=2, norm="ortho")
    t_active = idctn(p_hat * (lam_b + gv + ga) / det, type=2, norm="ortho")
    t_bulk = idctn(p_hat * gv / det, type=2, norm="ortho")
    return t_active, t_bulk


def _residual(matrix: sparse.csr_matrix, x: np.ndarray, b: np.ndarray) -> float:
    norm_b = np.linalg.norm(b)
    if norm_b == 0:
        return float(np.linalg.norm(matrix @ x))
    return float(np.linalg.norm(matrix @ x - b) / norm_b)


def _solve_pcg(matrix: sparse.csr_matrix, b: np.ndarray, rtol: float,
               maxiter: int) -> np.ndarray:
    """Conjugate gradients with Jacobi preconditioning and true-residual restarts."""
    inv_diag = 1.0 / matrix.diagonal()
    precond = spla.LinearOperator(matrix.shape, matvec=lambda v: inv_diag * v)
    x = np.zeros_like(b)
    for _ in range(6):
        r = b - matrix @ x
        try:
            dx, info = spla.cg(matrix, r, M=precond, rtol=rtol / 10, atol=0.0,
                               maxiter=maxiter)
        except TypeError:  # scipy < 1.12 spells it tol
            dx, info = spla.cg(matrix, r, M=precond, tol=rtol / 10, atol=0.0,
                               maxiter=maxiter)
        if info < 0:
            raise SolverError("conjugate-gradient breakdown (matrix not SPD?)")
        x = x + dx
        if _residual(matrix, x, b) <= rtol:
            return x
    raise SolverError(f"conjugate gradients stalled above rtol={rtol}")


def solve_steady_state(system: ConductanceSystem, power_cells: np.ndarray, *,
                       method: str = "auto", rtol: float = 1e-8,
                       maxiter: int = 200_000) -> TemperatureField:
    """Solve G*T = P for the steady-state rise; cell powers land on active nodes.

    Methods: 'dct' (exact direct solve in the cosine basis, the default via
    'auto'), 'pcg' (Jacobi-preconditioned conjugate gradients), 'direct'
    (sparse LU, small grids only). Every path verifies the relative residual
    against the assembled matrix.
    """
    grid = system.grid
    p_nodes = _coalesce_power(grid, np.asarray(power_cells, dtype=np.float64))
    n = grid.nodes_per_layer
    b = np.concatenate([p_nodes.ravel(), np.zeros(n)])

    if method == "auto":
        method = "dct"
    if method == "dct":
        t_a, t_b = _solve_modes(grid, p_nodes)
        x = np.concatenate([t_a.ravel(), t_b.ravel()])
        for _ in range(3):
            if _residual(system.matrix, x, b) <= rtol:
                break
            r_a, r_b = _solve_modes(grid, (b - system.matrix @ x)[:n].reshape(grid.ny, grid.nx))
            # refinement correction ignores the bulk residual component, which
            # the mode solve reproduces to roundoff anyway
            x = x + np.concatenate([r_a.ravel(), r_b.ravel()])
    elif method == "pcg":
        x = _solve_pcg(system.matrix, b, rtol, maxiter)
    elif method == "direct":
        x = spla.spsolve(system.matrix.tocsc(), b)
    else:
        raise ValueError(f"unknown solver method {method!r}")

    res = _residual(system.matrix, x, b)
    if res > rtol:
        raise SolverError(f"residual {res:.3e} above rtol {rtol:.1e} ({method})")
    return TemperatureField(
        grid=grid,
        rise_active=x[:n].reshape(grid.ny, grid.nx),
        rise_bulk=x[n:].reshape(grid.ny, grid.nx),
    )


def field_metrics(field: TemperatureField, power_cells: np.ndarray) -> dict:
    """Reporting quantities for one solved field."""
    grid = field.grid
    p_nodes = _coalesce_power(grid, np.asarray(power_cells, dtype=np.float64))
    total_power = float(p_nodes.sum())
    heat_out = float((field.rise_bulk * grid.g_ambient).sum())
    balance = abs(heat_out - total_power) / total_power if total_power > 0 else abs(heat_out)
    cells = grid.ny * grid.nx * grid.coalesce ** 2
    area_cm2 = cells * grid.cell_area_m2 * 1e4
    return {
        "t_max_c": field.t_max_c,
        "t_min_c": field.t_min_c,
        "rise_max_k": field.rise_max,
        "rise_min_k": field.rise_min,
        "spread_k": field.rise_max - field.rise_min,
        "total_power_w": total_power,
        "power_density_w_cm2": total_power / area_cm2,
        "energy_balance_rel": balance,
        "ambient_c": grid.stack.ambient_c,
    }


def max_duty_cycle(rise_max_at_full: float, limit_c: float, ambient_c: float) -> float:
    """Largest duty cycle keeping t_max at or below the limit, by linearity."""
    if limit_c <= ambient_c:
        raise ValueError("temperature limit must exceed ambient")
    if rise_max_at_full <= 0:
        return 1.0
    return min(1.0, (limit_c - ambient_c) / rise_max_at_full)


# --- exports ---------------------------------------------------------------

def temperature_csv(field: TemperatureField, layer: str = "active") -> str:
    """CSV matrix of absolute temperatures (degC) for one layer."""
    rise = field.rise_active if layer == "active" else field.rise_bulk
    absolute = rise + field.grid.stack.ambient_c
    return "\n".join(",".join(f"{v:.6f}" for v in row) for row in absolute) + "\n"


def temperature_text_matrix(field: TemperatureField, layer: str = "active") -> str:
    """Whitespace-separated matrix (degC), consumable by standard plotting tools."""
    rise = field.rise_active if layer == "active" else field.rise_bulk
    absolute = rise + field.grid.stack.ambient_c
    return "\n".join(" ".join(f"{v:.6f}" for v in row) for row in absolute) + "\n"


def heatmap_pgm(field: TemperatureField, layer: str = "active") -> bytes:
    """Grayscale PGM (binary P5) of the layer's rise, normalized to 0..255."""
    rise = field.rise_active if layer == "active" else field.rise_bulk
    lo, hi = float(rise.min()), float(rise.max())
    if hi > lo:
        scaled = np.round((rise - lo) / (hi - lo) * 255).astype(np.uint8)
    else:
        scaled = np.zeros_like(rise, dtype=np.uint8)
    header = f"P5\n{rise.shape[1]} {rise.shape[0]}\n255\n".encode()
    return header + scaled.tobytes()
