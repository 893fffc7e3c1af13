"""Deterministic theta-scheme dynamics on the torus.

One step applies A_h = (I - tau*b0*Lap_h/2)^{-1} (I + tau*b1*Lap_h/2), evaluated
exactly by diagonalizing the lattice Laplacian in the discrete Fourier basis.
A_h drives the noiseless forward density, the backward test-function evolution,
and the quadrature that predicts the variance of the linear fluctuation
statistic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .grid import (
    Field,
    TorusGrid,
    gradient_squared_values,
    inner,
    interpolate,
)

_TIME_RTOL = 1e-9


@dataclass(frozen=True)
class SchemeWeights:
    """Implicit/explicit splitting weights, b0 + b1 = 1, both nonnegative."""

    b0: float
    b1: float

    def __post_init__(self):
        if self.b0 < 0 or self.b1 < 0:
            raise ValueError(f"weights must be nonnegative, got ({self.b0}, {self.b1})")
        if abs(self.b0 + self.b1 - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1, got ({self.b0}, {self.b1})")


EXPLICIT_EULER = SchemeWeights(0.0, 1.0)
CRANK_NICOLSON = SchemeWeights(0.5, 0.5)


@dataclass(frozen=True)
class LevelParams:
    """One space-time resolution: grid spacing h, step tau = mu*h^2, horizon steps*tau."""

    ell: int
    grid: TorusGrid
    tau: float
    mu: float
    weights: SchemeWeights
    steps: int

    def __post_init__(self):
        if self.tau <= 0 or self.steps < 1:
            raise ValueError("need tau > 0 and steps >= 1")
        if abs(self.tau - self.mu * self.grid.h**2) > _TIME_RTOL * self.tau:
            raise ValueError(f"tau={self.tau} inconsistent with mu*h^2={self.mu * self.grid.h ** 2}")
        if self.weights.b0 == 0.0 and self.mu > 1.0 / self.grid.d + 1e-12:
            raise ValueError(
                f"explicit scheme requires mu <= 1/d for stability and the discrete "
                f"maximum principle; got mu={self.mu} with d={self.grid.d}"
            )

    @property
    def horizon(self) -> float:
        return self.steps * self.tau


def make_level(
    ell: int,
    d: int,
    n: int,
    mu: float,
    horizon: float,
    weights: SchemeWeights = EXPLICIT_EULER,
) -> LevelParams:
    """Build a level from the CFL ratio; horizon must be an integer multiple of tau."""
    grid = TorusGrid(d, n)
    tau = mu * grid.h**2
    steps = round(horizon / tau)
    if steps < 1 or abs(steps * tau - horizon) > _TIME_RTOL * max(horizon, tau):
        raise ValueError(f"horizon {horizon} is not an integer multiple of tau {tau}")
    return LevelParams(ell=ell, grid=grid, tau=tau, mu=mu, weights=weights, steps=steps)


def laplacian_symbol(grid: TorusGrid) -> np.ndarray:
    """Eigenvalues of the lattice Laplacian, -sum_j (2 - 2 cos(xi_j h)) / h^2, on the rfft layout."""
    n, h = grid.n, grid.h
    full = 2.0 * np.pi * np.fft.fftfreq(n)
    half = 2.0 * np.pi * np.arange(n // 2 + 1) / n
    lam = np.zeros(grid.shape[:-1] + (n // 2 + 1,))
    for ax in range(grid.d):
        w = half if ax == grid.d - 1 else full
        shape = [1] * grid.d
        shape[ax] = w.size
        lam = lam - (2.0 - 2.0 * np.cos(w)).reshape(shape) / h**2
    return lam


@lru_cache(maxsize=None)
def _multipliers(level: LevelParams) -> tuple[np.ndarray, np.ndarray]:
    lam = laplacian_symbol(level.grid)
    denom = 1.0 - 0.5 * level.tau * level.weights.b0 * lam
    step = (1.0 + 0.5 * level.tau * level.weights.b1 * lam) / denom
    return step, 1.0 / denom


def _apply_multiplier(grid: TorusGrid, v: np.ndarray, mult: np.ndarray) -> np.ndarray:
    axes = tuple(range(grid.d))
    return np.fft.irfftn(np.fft.rfftn(v, axes=axes) * mult, s=grid.shape, axes=axes)


def theta_step_values(level: LevelParams, v: np.ndarray) -> np.ndarray:
    return _apply_multiplier(level.grid, v, _multipliers(level)[0])


def theta_step(f: Field, level: LevelParams) -> Field:
    """One application of A_h; preserves total mass (DC multiplier is exactly 1)."""
    if f.grid != level.grid:
        raise ValueError("field grid does not match level grid")
    return Field(level.grid, theta_step_values(level, f.values))


def implicit_solve_values(level: LevelParams, v: np.ndarray) -> np.ndarray:
    """Apply (I - tau*b0*Lap_h/2)^{-1}; identity when b0 = 0."""
    if level.weights.b0 == 0.0:
        return v
    return _apply_multiplier(level.grid, v, _multipliers(level)[1])


def solve_mfl(rho0: Field, level: LevelParams) -> np.ndarray:
    """Noiseless trajectory, shape (steps+1,) + grid.shape, index m = time m*tau."""
    if rho0.grid != level.grid:
        raise ValueError("field grid does not match level grid")
    traj = np.empty((level.steps + 1,) + level.grid.shape)
    traj[0] = rho0.values
    for m in range(level.steps):
        traj[m + 1] = theta_step_values(level, traj[m])
    return traj


def mfl_endpoint(rho0: Field, level: LevelParams) -> Field:
    """Final slice of the noiseless solve without storing the trajectory."""
    v = rho0.values
    for _ in range(level.steps):
        v = theta_step_values(level, v)
    return Field(level.grid, v)


def backward_test(phi_T: Field, level: LevelParams) -> np.ndarray:
    """Backward test-function evolution phi^m = A_h phi^{m+1}, ending at phi^T.

    Returns shape (steps+1,) + grid.shape; index m = time m*tau.
    """
    if phi_T.grid != level.grid:
        raise ValueError("field grid does not match level grid")
    traj = np.empty((level.steps + 1,) + level.grid.shape)
    traj[level.steps] = phi_T.values
    for m in range(level.steps - 1, -1, -1):
        traj[m] = theta_step_values(level, traj[m + 1])
    return traj


def martingale_pairing(rho_traj: np.ndarray, phi_traj: np.ndarray, level: LevelParams) -> np.ndarray:
    """Pairing m -> (rho^m, phi^m)_h; constant in expectation over the noise."""
    if rho_traj.shape != phi_traj.shape:
        raise ValueError(f"trajectory shapes differ: {rho_traj.shape} vs {phi_traj.shape}")
    if rho_traj.shape[1:] != level.grid.shape:
        raise ValueError("trajectory does not match level grid")
    hd = level.grid.h**level.grid.d
    axes = tuple(range(1, rho_traj.ndim))
    return hd * np.sum(rho_traj * phi_traj, axis=axes)


def fluctuation_variance_oracle(
    rho0bar,
    phi,
    horizon: float,
    level: LevelParams,
    init_mode: str = "deterministic",
) -> float:
    """Deterministic prediction of the variance of the linear fluctuation statistic.

    Quadrature V_init + tau * sum_m (rhobar^m, |grad_h phi^m|^2)_h over m < steps,
    with rhobar the noiseless forward solve of the interpolated density and phi^m
    the backward test trajectory.  V_init is 0 for deterministic initial data and
    the per-particle variance (rhobar^0, (phi^0)^2)_h - (rhobar^0, phi^0)_h^2 for
    particle-sampled initial data.  The backward trajectory is stored; the forward
    density is streamed one step at a time.
    """
    if abs(horizon - level.horizon) > _TIME_RTOL * max(horizon, level.tau):
        raise ValueError(f"horizon {horizon} != steps*tau {level.horizon}")
    mode = str(getattr(init_mode, "value", init_mode))
    if mode not in ("deterministic", "particles"):
        raise ValueError(f"unknown init mode {init_mode!r}")
    grid = level.grid
    phi_traj = backward_test(interpolate(phi, grid), level)
    rho = interpolate(rho0bar, grid)

    total = 0.0
    if mode == "particles":
        phi0 = Field(grid, phi_traj[0])
        total += inner(rho, Field(grid, phi_traj[0] ** 2)) - inner(rho, phi0) ** 2

    hd = grid.h**grid.d
    v = rho.values
    for m in range(level.steps):
        gradsq = gradient_squared_values(grid, phi_traj[m])
        total += level.tau * hd * float(np.sum(v * gradsq))
        v = theta_step_values(level, v)
    return total


def heat_decay_factor(level: LevelParams, laplace_eigenvalue: float) -> float:
    """Per-step multiplier of an eigenfunction with lattice eigenvalue lam."""
    b0, b1 = level.weights.b0, level.weights.b1
    return (1.0 + 0.5 * level.tau * b1 * laplace_eigenvalue) / (
        1.0 - 0.5 * level.tau * b0 * laplace_eigenvalue
    )


def lattice_eigenvalue(grid: TorusGrid, xi: tuple[int, ...]) -> float:
    """Lattice Laplacian eigenvalue of exp(i xi.x) for integer frequency xi."""
    return -sum((2.0 - 2.0 * math.cos(x * grid.h)) / grid.h**2 for x in xi)
