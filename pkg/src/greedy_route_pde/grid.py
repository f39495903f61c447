"""Uniform periodic grids on the unit domain and grid functions living on them.

A grid stores ``n`` points per axis on [0, 1) with spacing ``h = 1/n``; the
periodic endpoint is not duplicated. Fields are flat float64 vectors in
row-major order for 2D grids.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import NonFiniteField, FormatVersionMismatch, GridMismatch, GridTooSmall, IoError

FIELD_MAGIC = b"GRPD"
FIELD_VERSION = 1
_HEADER = struct.Struct("<4sHHII")  # magic, version, dim, n, reserved


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid on [0, 1)^dim with n points per axis."""

    dim: int
    n: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise GridTooSmall(f"dim must be 1 or 2, got {self.dim}")
        if self.n < 4:
            raise GridTooSmall(f"need n >= 4, got n={self.n}")

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def npoints(self) -> int:
        return self.n ** self.dim

    def coords(self) -> np.ndarray:
        """Grid-point coordinates, shape (npoints, dim)."""
        x = np.arange(self.n) * self.h
        if self.dim == 1:
            return x[:, None]
        xx, yy = np.meshgrid(x, x, indexing="ij")
        return np.stack([xx.ravel(), yy.ravel()], axis=1)


@dataclass
class Field:
    """Real-valued grid function stored as a flat float64 vector."""

    grid: GridSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).ravel()
        if self.values.size != self.grid.npoints:
            raise GridMismatch(
                f"expected {self.grid.npoints} values, got {self.values.size}"
            )
        if not np.all(np.isfinite(self.values)):
            raise NonFiniteField("field contains non-finite entries")

    @classmethod
    def zeros(cls, grid: GridSpec) -> "Field":
        return cls(grid, np.zeros(grid.npoints))

    def as_nd(self) -> np.ndarray:
        """Values reshaped to (n,) or (n, n)."""
        if self.grid.dim == 1:
            return self.values
        return self.values.reshape(self.grid.n, self.grid.n)

    def copy(self) -> "Field":
        return Field(self.grid, self.values.copy())

    def norm(self) -> float:
        return float(np.linalg.norm(self.values))


def check_same_grid(a: GridSpec, b: GridSpec) -> None:
    if a != b:
        raise GridMismatch(f"grids differ: {a} vs {b}")


def save_field(f: Field, path) -> None:
    header = _HEADER.pack(FIELD_MAGIC, FIELD_VERSION, f.grid.dim, f.grid.n, 0)
    data = f.values.astype("<f8").tobytes()
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(data)
    except OSError as exc:
        raise IoError(str(exc)) from exc


def load_field(path) -> Field:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise IoError(str(exc)) from exc
    if len(raw) < _HEADER.size:
        raise FormatVersionMismatch("file too short for field header")
    magic, version, dim, n, _ = _HEADER.unpack_from(raw)
    if magic != FIELD_MAGIC:
        raise FormatVersionMismatch(f"bad magic {magic!r}")
    if version != FIELD_VERSION:
        raise FormatVersionMismatch(f"unsupported field version {version}")
    grid = GridSpec(dim=dim, n=n)
    body = raw[_HEADER.size:]
    expected = grid.npoints * 8
    if len(body) != expected:
        raise FormatVersionMismatch(
            f"expected {expected} payload bytes, got {len(body)}"
        )
    values = np.frombuffer(body, dtype="<f8")
    return Field(grid, values.copy())
