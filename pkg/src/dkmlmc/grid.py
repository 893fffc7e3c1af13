"""Uniform periodic lattices on the d-torus and second-order difference operators.

The torus is [-pi, pi)^d with n points per axis and spacing h = 2*pi/n.
Scalar fields store their values as (n,)*d arrays indexed arr[i0, ..., i_{d-1}],
where axis j corresponds to spatial direction j.  The flat serialization layout
is axis 0 fastest (Fortran order), which fixes the on-disk format.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * np.pi

_FIELD_MAGIC = b"DKFLD001"


@dataclass(frozen=True)
class TorusGrid:
    """Uniform lattice {-pi + k*h : k = 0..n-1}^d with h = 2*pi/n."""

    d: int
    n: int

    def __post_init__(self):
        if self.d < 1:
            raise ValueError(f"spatial dimension must be >= 1, got {self.d}")
        if self.n < 2:
            raise ValueError(f"points per axis must be >= 2, got {self.n}")

    @property
    def h(self) -> float:
        return TWO_PI / self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.d

    @property
    def npoints(self) -> int:
        return self.n**self.d

    def axis_points(self) -> np.ndarray:
        return -np.pi + self.h * np.arange(self.n)

    def meshgrid(self) -> list[np.ndarray]:
        """Coordinate arrays, one (n,)*d array per axis."""
        return list(np.meshgrid(*([self.axis_points()] * self.d), indexing="ij"))


@dataclass(frozen=True, eq=False)
class Field:
    """Scalar lattice function in L^2 of the grid."""

    grid: TorusGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise ValueError(f"values shape {v.shape} != grid shape {self.grid.shape}")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True, eq=False)
class VectorField:
    """d-component lattice function; components[r] is the field along direction r."""

    grid: TorusGrid
    components: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.components, dtype=float)
        expect = (self.grid.d,) + self.grid.shape
        if v.shape != expect:
            raise ValueError(f"components shape {v.shape} != {expect}")
        object.__setattr__(self, "components", v)


def make_grid(d: int, n: int) -> TorusGrid:
    return TorusGrid(d, n)


def constant_field(grid: TorusGrid, value: float) -> Field:
    return Field(grid, np.full(grid.shape, float(value)))


def interpolate(f, grid: TorusGrid) -> Field:
    """Pointwise interpolation: evaluate f on the lattice.

    f takes d positional arguments (coordinate arrays) and must vectorize.
    """
    return Field(grid, np.asarray(f(*grid.meshgrid()), dtype=float) * np.ones(grid.shape))


def _check_same_grid(a, b):
    if a.grid != b.grid:
        raise ValueError(f"grid mismatch: {a.grid} vs {b.grid}")


def inner(f: Field, g: Field) -> float:
    """Lattice inner product h^d * sum_x f(x) g(x)."""
    _check_same_grid(f, g)
    return f.grid.h**f.grid.d * float(np.sum(f.values * g.values))


def norm(f: Field) -> float:
    return float(np.sqrt(f.grid.h**f.grid.d * np.sum(f.values**2)))


def mass(f: Field) -> float:
    """Total mass h^d * sum_x f(x)."""
    return f.grid.h**f.grid.d * float(np.sum(f.values))


def laplacian_values(grid: TorusGrid, v: np.ndarray) -> np.ndarray:
    out = -2.0 * grid.d * v
    for ax in range(grid.d):
        out = out + np.roll(v, -1, axis=ax) + np.roll(v, 1, axis=ax)
    return out / grid.h**2


def laplacian(f: Field) -> Field:
    """Second-order stencil (-2d f(x) + sum of axis neighbors) / h^2."""
    return Field(f.grid, laplacian_values(f.grid, f.values))


def divergence_values(grid: TorusGrid, comps: np.ndarray) -> np.ndarray:
    out = np.zeros(grid.shape)
    for ax in range(grid.d):
        out = out + (np.roll(comps[ax], -1, axis=ax) - np.roll(comps[ax], 1, axis=ax))
    return out / (2.0 * grid.h)


def divergence(v: VectorField) -> Field:
    """Central difference divergence sum_r (v_r(x + h f_r) - v_r(x - h f_r)) / 2h."""
    return Field(v.grid, divergence_values(v.grid, v.components))


def gradient_values(grid: TorusGrid, v: np.ndarray) -> np.ndarray:
    out = np.empty((grid.d,) + grid.shape)
    for ax in range(grid.d):
        out[ax] = (np.roll(v, -1, axis=ax) - np.roll(v, 1, axis=ax)) / (2.0 * grid.h)
    return out


def gradient(f: Field) -> VectorField:
    """Central difference gradient; minus the adjoint of divergence under inner."""
    return VectorField(f.grid, gradient_values(f.grid, f.values))


def gradient_squared_values(grid: TorusGrid, v: np.ndarray) -> np.ndarray:
    """|grad f|^2 summed over components, without materializing the VectorField."""
    out = np.zeros(grid.shape)
    for ax in range(grid.d):
        g = (np.roll(v, -1, axis=ax) - np.roll(v, 1, axis=ax)) / (2.0 * grid.h)
        out += g * g
    return out


def save_field(path, f: Field, fmt: str = "binary") -> None:
    """Write a field: header (d, n) plus n^d values, axis 0 fastest.

    fmt "binary": magic, two little-endian int64, float64 payload.
    fmt "csv": first line "d,n", one value per line.
    """
    flat = f.values.ravel(order="F")
    if fmt == "binary":
        with open(path, "wb") as fh:
            fh.write(_FIELD_MAGIC)
            fh.write(struct.pack("<qq", f.grid.d, f.grid.n))
            fh.write(flat.astype("<f8").tobytes())
    elif fmt == "csv":
        with open(path, "w") as fh:
            fh.write(f"{f.grid.d},{f.grid.n}\n")
            for x in flat:
                fh.write(repr(float(x)) + "\n")
    else:
        raise ValueError(f"unknown field format {fmt!r}")


def load_field(path) -> Field:
    with open(path, "rb") as fh:
        head = fh.read(len(_FIELD_MAGIC))
        if head == _FIELD_MAGIC:
            d, n = struct.unpack("<qq", fh.read(16))
            grid = TorusGrid(int(d), int(n))
            flat = np.frombuffer(fh.read(8 * grid.npoints), dtype="<f8")
            return Field(grid, flat.reshape(grid.shape, order="F"))
    with open(path) as fh:
        d, n = (int(tok) for tok in fh.readline().split(","))
        grid = TorusGrid(d, n)
        flat = np.array([float(line) for line in fh if line.strip()])
    if flat.size != grid.npoints:
        raise ValueError(f"expected {grid.npoints} values, found {flat.size}")
    return Field(grid, flat.reshape(grid.shape, order="F"))
