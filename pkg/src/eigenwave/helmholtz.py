"""Discrete 2D Helmholtz problem (-lap - omega^2 m) p = f on a node grid.

Boundary treatment: the top row carries a homogeneous Dirichlet (free
surface) condition, the other three edges carry a first-order outgoing
condition (p_b - p_in)/h - i*omega*sqrt(m)*p_b = 0 discretized one-sided
and scaled by 1/h so boundary rows have the same magnitude as interior
rows.  Bottom corners take the condition of the vertical edge they touch,
top corners are Dirichlet.

One sparse LU factorization serves every right-hand side at a frequency,
including the adjoint (conjugate-transposed) systems.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import ComplexField, Grid2D, GridError, Model, same_grid

RESIDUAL_RTOL = 1e-10


class SolveError(RuntimeError):
    """Factorization or solve failed, or the residual contract was missed."""


@dataclass(frozen=True)
class Acquisition:
    """Line acquisition: point sources and fixed receivers, meters.

    sources: (x, z, complex amplitude) triples; receivers: (x, z) pairs.
    All source depths must agree, likewise all receiver depths.
    """

    sources: tuple[tuple[float, float, complex], ...]
    receivers: tuple[tuple[float, float], ...]

    def __post_init__(self):
        object.__setattr__(self, "sources", tuple((float(x), float(z), complex(a)) for x, z, a in self.sources))
        object.__setattr__(self, "receivers", tuple((float(x), float(z)) for x, z in self.receivers))
        if not self.sources or not self.receivers:
            raise GridError("acquisition needs at least one source and one receiver")
        src_depths = {z for _, z, _ in self.sources}
        rec_depths = {z for _, z in self.receivers}
        if len(src_depths) != 1 or len(rec_depths) != 1:
            raise GridError("sources and receivers must each sit at a single depth")

    @property
    def n_sources(self) -> int:
        return len(self.sources)

    @property
    def n_receivers(self) -> int:
        return len(self.receivers)

    def validate_in(self, grid: Grid2D) -> None:
        for x, z, _ in self.sources:
            if not grid.contains(x, z):
                raise GridError(f"source ({x}, {z}) outside grid")
        for x, z in self.receivers:
            if not grid.contains(x, z):
                raise GridError(f"receiver ({x}, {z}) outside grid")


@dataclass
class HelmholtzOperator:
    """Assembled sparse operator plus the data needed for its exact m-derivative."""

    grid: Grid2D
    omega: float
    matrix: sp.csc_matrix = field(repr=False)
    ddiag_dm: np.ndarray = field(repr=False)  # d(diagonal)/dm, zero on Dirichlet rows
    dirichlet_mask: np.ndarray = field(repr=False)
    _lu: spla.SuperLU | None = field(default=None, repr=False)

    def factor(self) -> spla.SuperLU:
        if self._lu is None:
            try:
                self._lu = spla.splu(self.matrix)
            except RuntimeError as exc:  # singular factorization
                raise SolveError(f"sparse LU failed (omega={self.omega}): {exc}") from exc
        return self._lu

    def solve(self, rhs_batch, adjoint: bool = False) -> list[ComplexField]:
        """Solve A u = f (or A^H q = f) for each rhs, reusing one factorization."""
        rhs = np.asarray(rhs_batch, dtype=np.complex128)
        single = rhs.ndim == 1
        if single:
            rhs = rhs[None, :]
        if rhs.shape[1] != self.grid.n_nodes:
            raise GridError(
                f"rhs length {rhs.shape[1]} != {self.grid.n_nodes} grid nodes"
            )
        sols = self.solve_array(rhs.T, adjoint=adjoint).T
        return [ComplexField(self.grid, s) for s in sols]

    def solve_array(self, rhs_cols: np.ndarray, adjoint: bool = False) -> np.ndarray:
        """Column-stacked variant used by the inversion hot loop."""
        lu = self.factor()
        trans = "H" if adjoint else "N"
        sols = lu.solve(np.ascontiguousarray(rhs_cols, dtype=np.complex128), trans=trans)
        if sols.ndim == 1:
            sols = sols[:, None]
        op = self.matrix.getH() if adjoint else self.matrix
        resid = op @ sols - rhs_cols
        rnorm = np.linalg.norm(resid, axis=0)
        bound = RESIDUAL_RTOL * np.maximum(1.0, np.linalg.norm(rhs_cols, axis=0))
        if np.any(rnorm > bound):
            # one round of iterative refinement before giving up
            sols = sols + lu.solve(rhs_cols - op @ sols, trans=trans)
            resid = op @ sols - rhs_cols
            rnorm = np.linalg.norm(resid, axis=0)
            if np.any(rnorm > bound):
                worst = int(np.argmax(rnorm / bound))
                raise SolveError(
                    f"residual contract missed: ||Au-f||={rnorm[worst]:.3e} exceeds "
                    f"{bound[worst]:.3e} (likely near-resonant or ill-conditioned operator)"
                )
        return sols


def _boundary_kind(ix: int, iz: int, nx: int, nz: int) -> str:
    if iz == 0:
        return "dirichlet"
    if ix == 0:
        return "left"
    if ix == nx - 1:
        return "right"
    if iz == nz - 1:
        return "bottom"
    return "interior"


def assemble(model: Model, omega: float, all_dirichlet: bool = False) -> HelmholtzOperator:
    """Build the sparse Helmholtz matrix for a model at angular frequency omega.

    With all_dirichlet=True every boundary row becomes an identity row
    (used for manufactured-solution verification); the default is the
    free-surface/absorbing layout described in the module docstring.
    """
    if omega <= 0.0:
        raise GridError(f"omega must be positive, got {omega}")
    g = model.grid
    nx, nz, hx, hz = g.nx, g.nz, g.hx, g.hz
    n = g.n_nodes
    m = model.m
    sqrt_m = np.sqrt(m)

    inv_hx2 = 1.0 / (hx * hx)
    inv_hz2 = 1.0 / (hz * hz)

    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    vals: list[np.ndarray] = []
    ddiag = np.zeros(n, dtype=np.complex128)
    dirichlet = np.zeros(n, dtype=bool)

    ix_all, iz_all = np.meshgrid(np.arange(nx), np.arange(nz))
    ix_all = ix_all.ravel()
    iz_all = iz_all.ravel()
    idx_all = iz_all * nx + ix_all

    interior = (ix_all > 0) & (ix_all < nx - 1) & (iz_all > 0) & (iz_all < nz - 1)
    if all_dirichlet:
        boundary_dir = ~interior
        left = right = bottom = np.zeros(n, dtype=bool)
    else:
        boundary_dir = iz_all == 0
        left = (ix_all == 0) & ~boundary_dir
        right = (ix_all == nx - 1) & ~boundary_dir
        bottom = (iz_all == nz - 1) & ~boundary_dir & ~left & ~right

    # interior 5-point rows
    idx = idx_all[interior]
    diag = 2.0 * inv_hx2 + 2.0 * inv_hz2 - omega ** 2 * m[idx]
    rows += [idx, idx, idx, idx, idx]
    cols += [idx, idx - 1, idx + 1, idx - nx, idx + nx]
    vals += [
        diag.astype(np.complex128),
        np.full(idx.size, -inv_hx2, dtype=np.complex128),
        np.full(idx.size, -inv_hx2, dtype=np.complex128),
        np.full(idx.size, -inv_hz2, dtype=np.complex128),
        np.full(idx.size, -inv_hz2, dtype=np.complex128),
    ]
    ddiag[idx] = -(omega ** 2)

    # Dirichlet rows (free surface, or all edges in the manufactured variant)
    idx = idx_all[boundary_dir]
    rows.append(idx)
    cols.append(idx)
    vals.append(np.ones(idx.size, dtype=np.complex128))
    dirichlet[idx] = True

    # outgoing rows: (p_b - p_in)/h^2 - i*omega*sqrt(m)/h * p_b = 0
    for mask, step, h in ((left, 1, hx), (right, -1, hx), (bottom, -nx, hz)):
        idx = idx_all[mask]
        if idx.size == 0:
            continue
        inv_h2 = 1.0 / (h * h)
        diag = inv_h2 - 1j * omega * sqrt_m[idx] / h
        rows += [idx, idx]
        cols += [idx, idx + step]
        vals += [diag, np.full(idx.size, -inv_h2, dtype=np.complex128)]
        ddiag[idx] = -1j * omega / (2.0 * sqrt_m[idx] * h)

    matrix = sp.csc_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    )
    return HelmholtzOperator(
        grid=g, omega=omega, matrix=matrix, ddiag_dm=ddiag, dirichlet_mask=dirichlet
    )


def nearest_node(grid: Grid2D, x: float, z: float) -> tuple[int, int]:
    if not grid.contains(x, z):
        raise GridError(f"position ({x}, {z}) outside grid")
    # floor(u + 0.5) ties break toward +, independent of banker's rounding
    ix = int(np.floor((x - grid.x0) / grid.hx + 0.5))
    iz = int(np.floor((z - grid.z0) / grid.hz + 0.5))
    return min(ix, grid.nx - 1), min(iz, grid.nz - 1)


def point_source_rhs(grid: Grid2D, x: float, z: float, amplitude: complex = 1.0) -> np.ndarray:
    """Delta load at the nearest node, scaled by the cell area."""
    ix, iz = nearest_node(grid, x, z)
    rhs = np.zeros(grid.n_nodes, dtype=np.complex128)
    rhs[grid.flatten(ix, iz)] = complex(amplitude) / (grid.hx * grid.hz)
    return rhs


def source_batch(grid: Grid2D, acq: Acquisition) -> np.ndarray:
    """Column-stacked point-source loads, one column per source."""
    acq.validate_in(grid)
    rhs = np.zeros((grid.n_nodes, acq.n_sources), dtype=np.complex128)
    for j, (x, z, amp) in enumerate(acq.sources):
        rhs[:, j] = point_source_rhs(grid, x, z, amp)
    return rhs


def receiver_matrix(grid: Grid2D, acq: Acquisition) -> sp.csr_matrix:
    """Sparse bilinear sampling operator, shape (n_receivers, n_nodes)."""
    acq.validate_in(grid)
    rows, cols, vals = [], [], []
    for r, (x, z) in enumerate(acq.receivers):
        u = (x - grid.x0) / grid.hx
        v = (z - grid.z0) / grid.hz
        ix = min(int(np.floor(u)), grid.nx - 2)
        iz = min(int(np.floor(v)), grid.nz - 2)
        tx = u - ix
        tz = v - iz
        base = grid.flatten(ix, iz)
        for col, w in (
            (base, (1.0 - tx) * (1.0 - tz)),
            (base + 1, tx * (1.0 - tz)),
            (base + grid.nx, (1.0 - tx) * tz),
            (base + grid.nx + 1, tx * tz),
        ):
            if w != 0.0:
                rows.append(r)
                cols.append(col)
                vals.append(w)
    return sp.csr_matrix((vals, (rows, cols)), shape=(acq.n_receivers, grid.n_nodes))


def sample_receivers(u: ComplexField, acq: Acquisition) -> np.ndarray:
    """Bilinear interpolation of the field at every receiver position."""
    return receiver_matrix(u.grid, acq) @ u.values


def solve(op: HelmholtzOperator, rhs_batch) -> list[ComplexField]:
    return op.solve(rhs_batch)
