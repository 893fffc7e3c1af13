"""The fluctuation observable: initial data, test functions, and psi-wrapping.

The target statistic on a level is psi( sqrt(N) * (rho^T - rhobar^T, I_h phi)_h )
with rhobar^T the noiseless discrete solve started from the interpolated
density.  Initial data is either that interpolant (deterministic mode, zero
initial fluctuation) or a binned empirical measure of N i.i.d. particles
(particles mode); in particles mode the same point set is binned on every level
of a coupled pair, which couples the initial fluctuations across the pair.
"""

from __future__ import annotations

import inspect
import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np

from .grid import Field, TorusGrid, inner, interpolate
from .noise import NoiseStream
from .pde import LevelParams

_MASS_QUAD_TOL = 1e-8
_PARTICLE_BATCH = 2_000_000


class InitMode(str, Enum):
    DETERMINISTIC = "deterministic"
    PARTICLES = "particles"


# --- built-in outer and test functions (module-level so they pickle) ---------


def psi_square(x):
    return x * x


def psi_identity(x):
    return x


def phi_sinsum(*xs):
    """sin(x_1) + ... + sin(x_d)."""
    out = np.sin(xs[0])
    for x in xs[1:]:
        out = out + np.sin(x)
    return out


def phi_sin_first(*xs):
    return np.sin(xs[0])


def phi_one(*xs):
    return np.ones_like(np.asarray(xs[0], dtype=float))


PSI_FUNCTIONS = {"square": psi_square, "identity": psi_identity}
PHI_FUNCTIONS = {"sinsum": phi_sinsum, "sin_first": phi_sin_first, "one": phi_one}


# --- built-in initial densities ----------------------------------------------


def _quadrature_mass(f, d: int, points: int = 1024) -> float:
    grid = TorusGrid(d, points)
    return grid.h**d * float(np.sum(f(*grid.meshgrid())))


@dataclass(frozen=True)
class UniformDensity:
    d: int

    def __call__(self, *xs):
        return np.full_like(np.asarray(xs[0], dtype=float), (2.0 * np.pi) ** (-self.d))


@dataclass(frozen=True)
class SmoothBumpDensity:
    """1 + Gaussian-like bump of the squared sines, normalized to unit mass."""

    norm: float

    def __call__(self, x, y):
        bump = np.exp(-(np.sin(x - np.pi / 2) ** 2 + np.sin(y - 1.5 * np.pi) ** 2) / 2.0)
        return (1.0 + bump / math.sqrt(2.0 * np.pi)) / self.norm


@dataclass(frozen=True)
class LowDensityBump:
    """Sharply peaked bump with ultra-low density regions, normalized to unit mass."""

    norm: float

    def __call__(self, x, y):
        expo = -(np.sin(x - np.pi / 2) ** 2 + np.sin(y - 1.5 * np.pi) ** 2) / 0.2
        return np.exp(expo) / self.norm


@lru_cache(maxsize=None)
def builtin_density(name: str, d: int = 2):
    """Named initial densities; normalizing constants from 1024-per-axis quadrature."""
    if name == "uniform":
        return UniformDensity(d)
    if d != 2:
        raise ValueError(f"density {name!r} is two-dimensional, got d={d}")
    if name == "reg":
        return SmoothBumpDensity(_quadrature_mass(SmoothBumpDensity(1.0), 2))
    if name == "irreg":
        return LowDensityBump(_quadrature_mass(LowDensityBump(1.0), 2))
    raise ValueError(f"unknown density {name!r}")


DENSITY_NAMES = ("uniform", "reg", "irreg")


# --- the observable spec ------------------------------------------------------


@dataclass(frozen=True)
class QoISpec:
    """Particle count, horizon, outer function, test function, and initial density."""

    N: float
    T: float
    psi: object
    phi: object
    rho0bar: object
    init_mode: InitMode = InitMode.DETERMINISTIC
    check_density: bool = True

    def __post_init__(self):
        if not (self.N >= 1):
            raise ValueError(f"particle count must be >= 1, got {self.N}")
        if self.T <= 0:
            raise ValueError("horizon must be positive")
        if self.init_mode is InitMode.PARTICLES and not (
            math.isfinite(self.N) and float(self.N).is_integer()
        ):
            raise ValueError("particles mode needs a finite integer particle count")
        if self.check_density:
            d = _density_dimension(self.rho0bar)
            if d is not None:
                points = {1: 4096, 2: 512, 3: 64}.get(d, 32)
                m = _quadrature_mass(self.rho0bar, d, points)
                if abs(m - 1.0) > _MASS_QUAD_TOL:
                    raise ValueError(f"initial density mass {m} != 1")


def _density_dimension(f):
    if isinstance(f, UniformDensity):
        return f.d
    if isinstance(f, (SmoothBumpDensity, LowDensityBump)):
        return 2
    explicit = getattr(f, "dimension", None)
    if explicit is not None:
        return explicit
    try:
        params = list(inspect.signature(f).parameters.values())
    except (TypeError, ValueError):
        return None
    if any(p.kind is inspect.Parameter.VAR_POSITIONAL for p in params):
        return None
    return len(params) or None


def prepare_initial(
    spec: QoISpec, levels: list[LevelParams], stream: NoiseStream
) -> list[tuple[Field, Field]]:
    """Per-level (rho0, rhobar0_h) with coupled initial data across the levels.

    Deterministic mode returns the interpolant twice.  Particles mode draws N
    points from the density by rejection sampling and bins the same points on
    every level's cells, so cell value = count / (N h^d) and the total mass is
    exactly one.
    """
    dims = {lv.grid.d for lv in levels}
    if len(dims) != 1:
        raise ValueError("levels must share one torus")
    d = dims.pop()
    interpolants = [interpolate(spec.rho0bar, lv.grid) for lv in levels]
    if spec.init_mode is InitMode.DETERMINISTIC:
        return [(f, f) for f in interpolants]

    counts = [np.zeros(lv.grid.shape) for lv in levels]
    envelope = _density_envelope(spec.rho0bar, d)
    remaining = int(spec.N)
    batch_index = 0
    while remaining > 0:
        rng = stream.init_rng(batch_index)
        batch_index += 1
        points = _rejection_batch(spec.rho0bar, d, envelope, min(remaining, _PARTICLE_BATCH), rng)
        remaining -= points.shape[1]
        for lv, cnt in zip(levels, counts):
            idx = np.floor((points + np.pi) / lv.grid.h).astype(np.int64) % lv.grid.n
            flat = np.ravel_multi_index(tuple(idx), lv.grid.shape)
            cnt += np.bincount(flat, minlength=lv.grid.npoints).reshape(lv.grid.shape)
    out = []
    for lv, cnt, f in zip(levels, counts, interpolants):
        rho0 = Field(lv.grid, cnt / (spec.N * lv.grid.h**d))
        out.append((rho0, f))
    return out


def _density_envelope(rho0bar, d: int) -> float:
    probe = TorusGrid(d, {1: 4096, 2: 512}.get(d, 48))
    values = np.asarray(rho0bar(*probe.meshgrid()), dtype=float)
    if np.any(values < 0.0):
        raise ValueError("initial density evaluates negative")
    return 1.05 * float(np.max(values)) + 1e-300


def _rejection_batch(rho0bar, d: int, envelope: float, size: int, rng) -> np.ndarray:
    """Draw up to `size` accepted points, shape (d, n_accepted)."""
    accepted = []
    got = 0
    while got < size:
        m = max(int(1.5 * (size - got)), 1024)
        x = rng.uniform(-np.pi, np.pi, size=(d, m))
        vals = np.asarray(rho0bar(*x), dtype=float)
        if np.any(vals < 0.0):
            raise ValueError("initial density evaluates negative")
        keep = rng.uniform(0.0, envelope, size=m) < vals
        pts = x[:, keep]
        accepted.append(pts)
        got += pts.shape[1]
    return np.concatenate(accepted, axis=1)[:, :size]


def fluctuation(rhoT: Field, rhobarT: Field, spec: QoISpec, level: LevelParams) -> float:
    """The linear statistic sqrt(N) * (rho^T - rhobar^T, I_h phi)_h."""
    if rhoT.grid != rhobarT.grid or rhoT.grid != level.grid:
        raise ValueError("fields and level must share one grid")
    phi_h = interpolate(spec.phi, level.grid)
    raw = inner(Field(level.grid, rhoT.values - rhobarT.values), phi_h)
    if math.isinf(spec.N):
        # Noiseless surrogate: the centered field is identically zero.
        return 0.0
    return math.sqrt(spec.N) * raw


def evaluate_P(rhoT: Field, rhobarT: Field, spec: QoISpec, level: LevelParams) -> float:
    return float(spec.psi(fluctuation(rhoT, rhobarT, spec, level)))
