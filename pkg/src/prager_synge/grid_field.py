"""Uniform cell-centred 2D grids, multi-component grid functions and the
L2 geometry (norms, inner products, distances, angles) shared by every
error estimator.

Grid function values are stored as ``(ny, nx, ncomp)`` arrays, i.e. row-major
by ``(j, i)`` with the component index innermost.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

DENSITY = (0,)
CONSERVED = (0, 1, 2, 3)
MASKS = {"density": DENSITY, "conserved": CONSERVED}

_MAGIC = "PSFIELD v1"


class GridMismatchError(ValueError):
    """Two grid functions live on different grids or have different ncomp."""


class UndefinedAngleError(ValueError):
    """Angle requested with a zero-norm argument."""


@dataclass(frozen=True)
class Grid:
    nx: int
    ny: int
    extent: tuple[float, float, float, float]

    @property
    def hx(self) -> float:
        x0, x1, _, _ = self.extent
        return (x1 - x0) / self.nx

    @property
    def hy(self) -> float:
        _, _, y0, y1 = self.extent
        return (y1 - y0) / self.ny

    @property
    def cell_area(self) -> float:
        return self.hx * self.hy

    def x_centers(self) -> np.ndarray:
        return self.extent[0] + (np.arange(self.nx) + 0.5) * self.hx

    def y_centers(self) -> np.ndarray:
        return self.extent[2] + (np.arange(self.ny) + 0.5) * self.hy

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Cell-centre coordinates as two ``(ny, nx)`` arrays."""
        return np.meshgrid(self.x_centers(), self.y_centers())


def make_grid(nx: int, ny: int, extent: Sequence[float] = (0.0, 1.0, 0.0, 1.0)) -> Grid:
    nx, ny = int(nx), int(ny)
    if nx < 1 or ny < 1:
        raise ValueError(f"cell counts must be >= 1, got nx={nx}, ny={ny}")
    x0, x1, y0, y1 = (float(v) for v in extent)
    if not (x1 > x0 and y1 > y0):
        raise ValueError(f"degenerate extent {extent!r}")
    return Grid(nx, ny, (x0, x1, y0, y1))


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Immutable field with ``ncomp`` scalars per cell."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64)
        if vals.ndim == 2:
            vals = vals[:, :, None]
        if vals.shape[:2] != (self.grid.ny, self.grid.nx) or vals.ndim != 3:
            raise ValueError(
                f"values shape {vals.shape} does not match grid ({self.grid.ny}, {self.grid.nx}, ncomp)"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("grid function contains non-finite values")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def ncomp(self) -> int:
        return self.values.shape[2]

    def component(self, k: int) -> np.ndarray:
        return self.values[:, :, k]

    def _check(self, other: "GridFunction") -> None:
        if self.grid != other.grid or self.ncomp != other.ncomp:
            raise GridMismatchError(
                f"cannot combine fields on {self.grid} (ncomp={self.ncomp}) "
                f"and {other.grid} (ncomp={other.ncomp})"
            )

    def __add__(self, other: "GridFunction") -> "GridFunction":
        self._check(other)
        return GridFunction(self.grid, self.values + other.values)

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        self._check(other)
        return GridFunction(self.grid, self.values - other.values)

    def __neg__(self) -> "GridFunction":
        return GridFunction(self.grid, -self.values)

    def __mul__(self, c: float) -> "GridFunction":
        return GridFunction(self.grid, float(c) * self.values)

    __rmul__ = __mul__


def zeros_like(f: GridFunction) -> GridFunction:
    return GridFunction(f.grid, np.zeros_like(f.values))


def _mask(mask: Iterable[int] | str | None, ncomp: int) -> tuple[int, ...]:
    if mask is None:
        mask = DENSITY
    if isinstance(mask, str):
        mask = MASKS[mask]
    mask = tuple(sorted(set(int(k) for k in mask)))
    if not mask:
        raise ValueError("component mask must be nonempty")
    if mask[0] < 0 or mask[-1] >= ncomp:
        raise ValueError(f"mask {mask} out of range for ncomp={ncomp}")
    return mask


def _weight(grid: Grid, weighted: bool) -> float:
    return grid.cell_area if weighted else 1.0


def dot(f: GridFunction, g: GridFunction, mask=None, *, weighted: bool = True) -> float:
    """Cell-measure weighted inner product over the masked components."""
    f._check(g)
    m = _mask(mask, f.ncomp)
    a = f.values[:, :, m].ravel()
    b = g.values[:, :, m].ravel()
    return float(np.dot(a, b)) * _weight(f.grid, weighted)


def l2_norm(f: GridFunction, mask=None, *, weighted: bool = True) -> float:
    m = _mask(mask, f.ncomp)
    a = f.values[:, :, m].ravel()
    return math.sqrt(float(np.dot(a, a)) * _weight(f.grid, weighted))


def distance(f: GridFunction, g: GridFunction, mask=None, *, weighted: bool = True) -> float:
    f._check(g)
    return l2_norm(f - g, mask, weighted=weighted)


def angle_between(f: GridFunction, g: GridFunction, mask=None, *, weighted: bool = True) -> float:
    """Angle in ``[0, pi]`` between two fields; zero-norm inputs raise."""
    f._check(g)
    nf = l2_norm(f, mask, weighted=weighted)
    ng = l2_norm(g, mask, weighted=weighted)
    if nf == 0.0 or ng == 0.0:
        raise UndefinedAngleError("angle undefined for a zero-norm field")
    # half-angle form: accurate near 0 and pi, where acos loses half the digits
    m = _mask(mask, f.ncomp)
    a = f.values[:, :, m].ravel() / nf
    b = g.values[:, :, m].ravel() / ng
    return 2.0 * math.atan2(float(np.linalg.norm(a - b)), float(np.linalg.norm(a + b)))


# -- persistence ---------------------------------------------------------------

def save_field(f: GridFunction, path) -> None:
    """Write ``f`` in PSFIELD v1 format (text header + little-endian float64)."""
    g = f.grid
    x0, x1, y0, y1 = g.extent
    header = f"{_MAGIC} {g.nx} {g.ny} {f.ncomp} {x0!r} {x1!r} {y0!r} {y1!r}\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())


def load_field(path) -> GridFunction:
    data = Path(path).read_bytes()
    nl = data.index(b"\n")
    parts = data[:nl].decode("ascii").split()
    if " ".join(parts[:2]) != _MAGIC or len(parts) != 9:
        raise ValueError(f"{path}: not a PSFIELD v1 file")
    nx, ny, ncomp = (int(p) for p in parts[2:5])
    extent = tuple(float(p) for p in parts[5:9])
    body = np.frombuffer(data[nl + 1:], dtype="<f8")
    if body.size != nx * ny * ncomp:
        raise ValueError(f"{path}: expected {nx * ny * ncomp} values, found {body.size}")
    return GridFunction(make_grid(nx, ny, extent), body.reshape(ny, nx, ncomp).astype(np.float64))
