"""Gaussian random field sampling in Fourier space and dataset generation.

Fields are sampled with covariance (-Laplacian + shift I)^(-power): unit white
noise is filtered mode-wise so that the unitary-DFT coefficient of mode k has
variance (4 pi^2 |k|^2 + shift)^(-power). Sampling white noise in physical
space makes the spectrum exactly Hermitian, so the field is real by
construction.

Per-sample RNG streams use the counter-based Philox generator keyed by
(seed, sample_index), so datasets replay identically on any platform.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import ChecksumMismatch, FormatVersionMismatch, IoError
from .grid import Field, GridSpec
from .operators import (
    EquationKind,
    build_operator,
    dft,
    idft,
    reference_solution,
)

DATASET_MAGIC = b"GRDS"
DATASET_VERSION = 1
_DS_HEADER = struct.Struct("<4sHBBIIQd")  # magic ver eq dim n count seed shift


@dataclass(frozen=True)
class GrfSpec:
    """Covariance and seeding parameters for field sampling."""

    grid: GridSpec
    shift: float = 9.0
    power: int = 2
    zero_dc: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.shift <= 0:
            raise ValueError(f"covariance shift must be > 0, got {self.shift}")
        if self.power < 1:
            raise ValueError(f"covariance power must be >= 1, got {self.power}")


def mode_std(spec: GrfSpec) -> np.ndarray:
    """Per-mode standard deviation of the spectral coefficients."""
    n = spec.grid.n
    k = np.fft.fftfreq(n) * n
    if spec.grid.dim == 1:
        ksq = k**2
    else:
        ksq = k[:, None] ** 2 + k[None, :] ** 2
    sigma = (4.0 * np.pi**2 * ksq + spec.shift) ** (-spec.power / 2.0)
    if spec.zero_dc:
        sigma = sigma.copy()
        sigma[(0,) * spec.grid.dim] = 0.0
    return sigma


def sample_rng(spec: GrfSpec, index: int) -> np.random.Generator:
    """Dedicated Philox stream for one sample index."""
    key = np.array([spec.seed, index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def sample_grf(spec: GrfSpec, rng: np.random.Generator) -> Field:
    """One real field draw; spectrum filtered by the covariance."""
    grid = spec.grid
    shape = (grid.n,) if grid.dim == 1 else (grid.n, grid.n)
    white = Field(grid, rng.standard_normal(shape).ravel())
    coeffs = dft(white) * mode_std(spec)
    return idft(grid, coeffs.ravel() if grid.dim == 2 else coeffs)


@dataclass
class Dataset:
    """Paired (forcing, solution) samples with exact spectral references."""

    equation: EquationKind
    grid: GridSpec
    shift: float  # Helmholtz a^2; 0 for Poisson
    seed: int
    forcings: np.ndarray = dc_field(repr=False)  # (count, N)
    solutions: np.ndarray = dc_field(repr=False)  # (count, N)

    @property
    def count(self) -> int:
        return self.forcings.shape[0]

    def pair(self, i: int) -> tuple:
        return (Field(self.grid, self.forcings[i]),
                Field(self.grid, self.solutions[i]))


def generate_dataset(
    grid: GridSpec,
    count: int,
    equation: EquationKind,
    shift: float = 0.0,
    seed: int = 0,
    cov_shift: float = 9.0,
    cov_power: int = 2,
) -> Dataset:
    """Draw GRF forcings and pair each with its exact reference solution."""
    zero_dc = equation is EquationKind.POISSON
    spec = GrfSpec(grid=grid, shift=cov_shift, power=cov_power,
                   zero_dc=zero_dc, seed=seed)
    op = build_operator(grid, equation, shift)
    npts = grid.npoints
    forcings = np.zeros((count, npts))
    solutions = np.zeros((count, npts))
    for i in range(count):
        f = sample_grf(spec, sample_rng(spec, i))
        if zero_dc:
            # DC mode is zeroed spectrally; remove rounding residue too
            f = Field(grid, f.values - f.values.mean())
        u = reference_solution(op, f)
        forcings[i] = f.values
        solutions[i] = u.values
    return Dataset(equation=equation, grid=grid, shift=op.shift, seed=seed,
                   forcings=forcings, solutions=solutions)


def save_dataset(ds: Dataset, path) -> None:
    eq_code = 0 if ds.equation is EquationKind.POISSON else 1
    header = _DS_HEADER.pack(
        DATASET_MAGIC, DATASET_VERSION, eq_code, ds.grid.dim, ds.grid.n,
        ds.count, ds.seed, ds.shift,
    )
    chunks = [header]
    for i in range(ds.count):
        chunks.append(ds.forcings[i].astype("<f8").tobytes())
        chunks.append(ds.solutions[i].astype("<f8").tobytes())
    body = b"".join(chunks)
    crc = zlib.crc32(body) & 0xFFFFFFFF
    try:
        with open(path, "wb") as fh:
            fh.write(body)
            fh.write(struct.pack("<I", crc))
    except OSError as exc:
        raise IoError(str(exc)) from exc


def load_dataset(path) -> Dataset:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise IoError(str(exc)) from exc
    if len(raw) < _DS_HEADER.size + 4:
        raise FormatVersionMismatch("file too short for dataset header")
    body, crc_bytes = raw[:-4], raw[-4:]
    (crc_stored,) = struct.unpack("<I", crc_bytes)
    if zlib.crc32(body) & 0xFFFFFFFF != crc_stored:
        raise ChecksumMismatch("dataset CRC32 mismatch")
    magic, version, eq_code, dim, n, count, seed, shift = _DS_HEADER.unpack_from(body)
    if magic != DATASET_MAGIC:
        raise FormatVersionMismatch(f"bad magic {magic!r}")
    if version != DATASET_VERSION:
        raise FormatVersionMismatch(f"unsupported dataset version {version}")
    grid = GridSpec(dim=dim, n=n)
    npts = grid.npoints
    expected = _DS_HEADER.size + count * 2 * npts * 8
    if len(body) != expected:
        raise FormatVersionMismatch("dataset payload size mismatch")
    forcings = np.zeros((count, npts))
    solutions = np.zeros((count, npts))
    off = _DS_HEADER.size
    for i in range(count):
        forcings[i] = np.frombuffer(body, dtype="<f8", count=npts, offset=off)
        off += npts * 8
        solutions[i] = np.frombuffer(body, dtype="<f8", count=npts, offset=off)
        off += npts * 8
    equation = EquationKind.POISSON if eq_code == 0 else EquationKind.HELMHOLTZ
    return Dataset(equation=equation, grid=grid, shift=shift, seed=seed,
                   forcings=forcings, solutions=solutions)
