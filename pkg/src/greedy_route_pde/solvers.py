"""Classical preconditioners exposed through a uniform apply-to-residual API.

Each solver maps a residual field to a correction; the hybrid iteration adds
that correction to the current iterate. All classical solvers are linear and
map the zero residual to zero exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve_triangular

from .errors import (
    HierarchyMismatch,
    NonlinearSolver,
    OddGrid,
    ZeroDiagonal,
)
from .grid import Field, GridSpec, check_same_grid
from .operators import (
    DiscreteOperator,
    RESONANCE_TOL,
    apply_operator,
    build_operator,
    dft,
    idft,
    laplacian_symbol,
)

JACOBI = "jacobi"
GAUSS_SEIDEL = "gauss_seidel"
MULTIGRID = "multigrid"
NEURAL = "neural"


@dataclass(frozen=True)
class MgConfig:
    """V-cycle parameters; defaults are textbook damped-Jacobi smoothing."""

    levels: int
    pre_smooth: int = 3
    post_smooth: int = 3
    omega: float = 2.0 / 3.0
    coarsest_n: int = 4

    def __post_init__(self):
        if self.levels < 2:
            raise HierarchyMismatch(f"need levels >= 2, got {self.levels}")
        if self.coarsest_n < 2:
            raise HierarchyMismatch("coarsest_n must be >= 2")


@dataclass
class OperatorHierarchy:
    """Rediscretized operators from fine to coarse, each grid halving n."""

    ops: list

    @property
    def fine(self) -> DiscreteOperator:
        return self.ops[0]


def build_hierarchy(op: DiscreteOperator, cfg: MgConfig) -> OperatorHierarchy:
    n = op.grid.n
    if n % (2 ** (cfg.levels - 1)) != 0:
        raise HierarchyMismatch(
            f"n={n} not divisible by 2^{cfg.levels - 1}"
        )
    if n // 2 ** (cfg.levels - 1) < cfg.coarsest_n:
        raise HierarchyMismatch(
            f"coarsest grid below coarsest_n={cfg.coarsest_n}"
        )
    ops = [op]
    for _ in range(cfg.levels - 1):
        coarse_grid = GridSpec(op.grid.dim, ops[-1].grid.n // 2)
        ops.append(build_operator(coarse_grid, op.kind, op.shift))
    return OperatorHierarchy(ops=ops)


def default_mg_levels(n: int, coarsest_n: int = 4) -> int:
    """Deepest hierarchy whose coarsest grid has coarsest_n points per axis."""
    levels = 1
    while n % 2 == 0 and n // 2 >= coarsest_n:
        n //= 2
        levels += 1
    return levels


def jacobi_apply(op: DiscreteOperator, r: Field, omega: float = 1.0) -> Field:
    """omega * D^{-1} r."""
    check_same_grid(op.grid, r.grid)
    d = op.diagonal
    if d <= 0:
        raise ZeroDiagonal(f"non-positive diagonal {d}")
    return Field(r.grid, (omega / d) * r.values)


def gauss_seidel_apply(op: DiscreteOperator, r: Field) -> Field:
    """(D + L)^{-1} r via forward substitution in lexicographic order."""
    check_same_grid(op.grid, r.grid)
    lower = sp.tril(op.as_sparse(), k=0, format="csr")
    x = spsolve_triangular(lower, r.values, lower=True)
    return Field(r.grid, x)


def restrict(v: Field) -> Field:
    """Full-weighting restriction ([1,2,1]/4 stencil, tensorized in 2D)."""
    n = v.grid.n
    if n % 2 != 0:
        raise OddGrid(f"cannot restrict odd n={n}")
    a = v.as_nd()
    for axis in range(v.grid.dim):
        a = (
            np.roll(a, 1, axis=axis) + 2.0 * a + np.roll(a, -1, axis=axis)
        ) / 4.0
        a = np.take(a, np.arange(0, n, 2), axis=axis)
    return Field(GridSpec(v.grid.dim, n // 2), a.ravel())


def prolong(v: Field) -> Field:
    """Piecewise-linear interpolation to the doubled grid."""
    nc = v.grid.n
    a = v.as_nd()
    for axis in range(v.grid.dim):
        fine_shape = list(a.shape)
        fine_shape[axis] = 2 * fine_shape[axis]
        out = np.zeros(fine_shape)
        even = [slice(None)] * a.ndim
        odd = [slice(None)] * a.ndim
        even[axis] = slice(0, None, 2)
        odd[axis] = slice(1, None, 2)
        out[tuple(even)] = a
        out[tuple(odd)] = (a + np.roll(a, -1, axis=axis)) / 2.0
        a = out
    return Field(GridSpec(v.grid.dim, 2 * nc), a.ravel())


def _spectral_minnorm_solve(op: DiscreteOperator, r: Field) -> Field:
    """Exact spectral inverse, zeroing near-null modes (min-norm for Poisson)."""
    lam = (laplacian_symbol(op.grid) - op.shift).ravel()
    rhat = dft(r).ravel()
    xhat = np.zeros_like(rhat)
    nz = np.abs(lam) > RESONANCE_TOL
    xhat[nz] = rhat[nz] / lam[nz]
    return idft(op.grid, xhat)


def vcycle_apply(hier: OperatorHierarchy, cfg: MgConfig, r: Field) -> Field:
    """One V-cycle approximating L^{-1} r, starting from a zero guess."""
    if len(hier.ops) != cfg.levels:
        raise HierarchyMismatch(
            f"hierarchy has {len(hier.ops)} levels, config wants {cfg.levels}"
        )
    check_same_grid(hier.fine.grid, r.grid)
    return _vcycle(hier, cfg, 0, r)


def _vcycle(hier: OperatorHierarchy, cfg: MgConfig, level: int, r: Field) -> Field:
    op = hier.ops[level]
    if level == len(hier.ops) - 1:
        return _spectral_minnorm_solve(op, r)
    x = Field.zeros(op.grid)
    d = op.diagonal
    for _ in range(cfg.pre_smooth):
        res = r.values - apply_operator(op, x).values
        x = Field(op.grid, x.values + (cfg.omega / d) * res)
    res = Field(op.grid, r.values - apply_operator(op, x).values)
    coarse = _vcycle(hier, cfg, level + 1, restrict(res))
    x = Field(op.grid, x.values + prolong(coarse).values)
    for _ in range(cfg.post_smooth):
        res = r.values - apply_operator(op, x).values
        x = Field(op.grid, x.values + (cfg.omega / d) * res)
    return x


@dataclass
class SolverHandle:
    """One preconditioning function in the ensemble."""

    id: int
    kind: str
    label: str = ""
    omega: float = 1.0
    mg_config: Optional[MgConfig] = None
    hierarchy: Optional[OperatorHierarchy] = dc_field(default=None, repr=False)
    model: object = dc_field(default=None, repr=False)

    def __post_init__(self):
        if self.kind == JACOBI and not (0.0 < self.omega <= 1.0):
            raise ZeroDiagonal(f"jacobi omega must be in (0, 1], got {self.omega}")
        if not self.label:
            self.label = self.kind

    @property
    def is_linear(self) -> bool:
        return self.kind != NEURAL


def jacobi_handle(id: int, omega: float = 1.0, label: str = "") -> SolverHandle:
    return SolverHandle(id=id, kind=JACOBI, omega=omega,
                        label=label or f"jacobi(w={omega:g})")


def gauss_seidel_handle(id: int, label: str = "gs") -> SolverHandle:
    return SolverHandle(id=id, kind=GAUSS_SEIDEL, label=label)


def multigrid_handle(
    id: int, op: DiscreteOperator, cfg: Optional[MgConfig] = None,
    label: str = "mg",
) -> SolverHandle:
    if cfg is None:
        cfg = MgConfig(levels=default_mg_levels(op.grid.n))
    hier = build_hierarchy(op, cfg)
    return SolverHandle(id=id, kind=MULTIGRID, mg_config=cfg,
                        hierarchy=hier, label=label)


def neural_handle(id: int, model, label: str = "deeponet") -> SolverHandle:
    return SolverHandle(id=id, kind=NEURAL, model=model, label=label)


def apply_solver(handle: SolverHandle, op: DiscreteOperator, r: Field) -> Field:
    """Dispatch to the kind-specific apply."""
    if handle.kind == JACOBI:
        return jacobi_apply(op, r, handle.omega)
    if handle.kind == GAUSS_SEIDEL:
        return gauss_seidel_apply(op, r)
    if handle.kind == MULTIGRID:
        return vcycle_apply(handle.hierarchy, handle.mg_config, r)
    if handle.kind == NEURAL:
        return handle.model.predict(r)
    raise NonlinearSolver(f"unknown solver kind {handle.kind!r}")


def error_propagation_matrix(
    handle: SolverHandle, op: DiscreteOperator
) -> np.ndarray:
    """Dense I - C L, assembled by applying the hybrid step to basis errors."""
    if not handle.is_linear:
        raise NonlinearSolver("error propagation matrix requires a linear solver")
    npts = op.grid.npoints
    if npts > 4096:
        raise NonlinearSolver(f"N={npts} too large for dense assembly")
    cols = np.zeros((npts, npts))
    for i in range(npts):
        e = np.zeros(npts)
        e[i] = 1.0
        ef = Field(op.grid, e)
        corr = apply_solver(handle, op, apply_operator(op, ef))
        cols[:, i] = e - corr.values
    return cols
