"""Finite-difference operators for constant-coefficient Poisson/Helmholtz.

The discrete operator is the standard second-order central-difference negative
Laplacian minus ``shift * I`` on a periodic grid, which makes it circulant and
diagonal in the discrete Fourier basis. All DFTs use the unitary ("ortho")
normalization so Parseval holds symmetrically.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from enum import Enum

import numpy as np
import scipy.sparse as sp

from .errors import GridTooSmall, IncompatibleRHS, ResonantShift
from .grid import Field, GridSpec, check_same_grid

RESONANCE_TOL = 1e-12


class EquationKind(Enum):
    POISSON = "poisson"
    HELMHOLTZ = "helmholtz"


@dataclass
class DiscreteOperator:
    """Circulant negative-Laplacian-minus-shift matrix, applied via stencil."""

    grid: GridSpec
    kind: EquationKind
    shift: float = 0.0  # a^2 >= 0; 0 for Poisson

    _sparse: sp.csr_matrix = dc_field(default=None, repr=False, compare=False)

    @property
    def diagonal(self) -> float:
        d, h = self.grid.dim, self.grid.h
        return 2.0 * d / h**2 - self.shift

    def is_singular(self) -> bool:
        return self.kind is EquationKind.POISSON

    def as_sparse(self) -> sp.csr_matrix:
        """Explicit sparse matrix (cached); used by Gauss-Seidel and oracles."""
        if self._sparse is None:
            n, h = self.grid.n, self.grid.h
            off = np.full(n, -1.0 / h**2)
            lap1d = sp.diags(
                [off[:-1], np.full(n, 2.0 / h**2), off[:-1]], [-1, 0, 1]
            ).tolil()
            lap1d[0, n - 1] += -1.0 / h**2
            lap1d[n - 1, 0] += -1.0 / h**2
            lap1d = lap1d.tocsr()
            if self.grid.dim == 1:
                mat = lap1d
            else:
                eye = sp.identity(n, format="csr")
                mat = sp.kron(lap1d, eye) + sp.kron(eye, lap1d)
            mat = mat - self.shift * sp.identity(self.grid.npoints)
            self._sparse = sp.csr_matrix(mat)
        return self._sparse


def laplacian_symbol(grid: GridSpec) -> np.ndarray:
    """Eigenvalues of the periodic negative Laplacian per Fourier mode.

    Shape (n,) in 1D, (n, n) in 2D, indexed by FFT mode order.
    """
    n, h = grid.n, grid.h
    k = np.arange(n)
    lam1d = (2.0 - 2.0 * np.cos(2.0 * np.pi * k / n)) / h**2
    if grid.dim == 1:
        return lam1d
    return lam1d[:, None] + lam1d[None, :]


def build_operator(
    grid: GridSpec, kind: EquationKind, shift: float = 0.0
) -> DiscreteOperator:
    """Assemble the operator, rejecting resonant Helmholtz shifts."""
    if grid.n < 4:
        raise GridTooSmall(f"n={grid.n} < 4")
    if kind is EquationKind.POISSON:
        shift = 0.0
    else:
        if shift < 0:
            raise ResonantShift(f"shift must be >= 0, got {shift}")
        lam = laplacian_symbol(grid)
        if np.any(np.abs(lam - shift) < RESONANCE_TOL):
            raise ResonantShift(f"shift {shift} resonates with a Laplacian mode")
    return DiscreteOperator(grid=grid, kind=kind, shift=shift)


def apply_operator(op: DiscreteOperator, v: Field) -> Field:
    """Stencil application with periodic wraparound."""
    check_same_grid(op.grid, v.grid)
    h = op.grid.h
    a = v.as_nd()
    if op.grid.dim == 1:
        out = (2.0 * a - np.roll(a, 1) - np.roll(a, -1)) / h**2
    else:
        out = (
            4.0 * a
            - np.roll(a, 1, axis=0)
            - np.roll(a, -1, axis=0)
            - np.roll(a, 1, axis=1)
            - np.roll(a, -1, axis=1)
        ) / h**2
    out = out - op.shift * a
    return Field(v.grid, out.ravel())


def residual(op: DiscreteOperator, u: Field, f: Field) -> Field:
    """r = f - L u."""
    check_same_grid(u.grid, f.grid)
    lu = apply_operator(op, u)
    return Field(f.grid, f.values - lu.values)


def dft(v: Field) -> np.ndarray:
    """Unitary DFT; shape (n,) in 1D, (n, n) in 2D."""
    if v.grid.dim == 1:
        return np.fft.fft(v.values, norm="ortho")
    return np.fft.fft2(v.as_nd(), norm="ortho")


def idft(grid: GridSpec, modes: np.ndarray) -> Field:
    """Unitary inverse DFT; discards the (tiny) imaginary residue."""
    if grid.dim == 1:
        vals = np.fft.ifft(modes, norm="ortho")
    else:
        vals = np.fft.ifft2(modes.reshape(grid.n, grid.n), norm="ortho")
    return Field(grid, vals.real.ravel())


@dataclass
class SpectralDecomposition:
    """Operator eigenvalues in FFT mode order (flattened for 2D)."""

    grid: GridSpec
    eigenvalues: np.ndarray


def operator_spectrum(op: DiscreteOperator) -> SpectralDecomposition:
    lam = laplacian_symbol(op.grid) - op.shift
    return SpectralDecomposition(grid=op.grid, eigenvalues=lam.ravel())


def project_zero_mean(v: Field) -> Field:
    return Field(v.grid, v.values - v.values.mean())


def reference_solution(op: DiscreteOperator, f: Field) -> Field:
    """Exact spectral inverse; minimum-norm solution for singular Poisson."""
    check_same_grid(op.grid, f.grid)
    if op.is_singular():
        mean = abs(float(f.values.mean()))
        if mean > 1e-8:
            raise IncompatibleRHS(f"Poisson RHS mean {mean:.3e} exceeds 1e-8")
    lam = (laplacian_symbol(op.grid) - op.shift).ravel()
    fhat = dft(f).ravel()
    uhat = np.zeros_like(fhat)
    nz = np.abs(lam) > RESONANCE_TOL
    uhat[nz] = fhat[nz] / lam[nz]
    return idft(op.grid, uhat)


def operator_dense(op: DiscreteOperator) -> np.ndarray:
    """Dense matrix assembly; intended for oracles and small grids."""
    return op.as_sparse().toarray()
