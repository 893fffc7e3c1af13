"""Discrete vector-valued space-time white noise, singly and as coupled pairs.

Single-level increments are i.i.d. Gaussians per (site, component) with variance
tau * h^{-d}.  Coupled generation draws one block of underlying Gaussians per
coarse step and maps it linearly to kappa_t fine increments plus one coarse
increment, so that each marginal is exactly white at its own level:

* Nearest-neighbour coupling (grid ratio 2, time ratio 4): the coarse Brownian
  increment at site y aggregates the fine-site increments over the right-most
  block {y + h_f*v : v in {0,1}^d} and the 4 temporal sub-steps, scaled by
  2^{-d/2} and the coarse basis normalization h_c^{-d/2}.

* Fourier coupling (grid ratio 3, time ratio 9): fine increments are synthesized
  by inverse FFT from Hermitian complex Gaussian coefficients over the fine
  frequency box; the coarse increment reuses the temporal sums of those
  coefficients on the coarse frequency box.  Frequencies with a component equal
  to -n_c/2 have no negation partner inside the coarse box, so they are
  re-symmetrized there (a Hermitian projection that preserves exact whiteness);
  all interior frequencies are shared verbatim.

Streams are derived per (master_seed, level, replicate, counter) with a fresh
counter-addressed generator per step, so any sample is reproducible in
isolation.  The role tag never enters the derivation: fine and coarse outputs
of one replicate consume the same underlying Gaussians.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np

from .grid import TorusGrid, VectorField
from .pde import LevelParams

_SEED_MASK = (1 << 64) - 1
_DYNAMICS_DOMAIN = 0
_INIT_DOMAIN = 1
_ROLES = ("single", "fine", "coarse")

# A Hermitian-symmetric field of coefficients should synthesize to a real field
# up to rounding; fail loudly beyond this relative residue.
_IMAG_RESIDUE_LIMIT = 1e-10


class CouplingKind(Enum):
    """Two-level noise coupling; fixes the grid and time-step ratios."""

    NEAREST_NEIGHBOUR = "nn"
    FOURIER = "fourier"

    @property
    def space_ratio(self) -> int:
        return 2 if self is CouplingKind.NEAREST_NEIGHBOUR else 3

    @property
    def time_ratio(self) -> int:
        return self.space_ratio**2


@dataclass
class NoiseStream:
    """Counter-addressed Gaussian stream for one (level, replicate).

    The Gaussian block at a given counter is a pure function of
    (master_seed, level, replicate, counter); the role tag is metadata used
    only for interface validation.  Distinct (level, replicate) pairs are
    statistically independent.
    """

    master_seed: int
    level: int
    replicate: int
    role: str = "single"
    counter: int = 0

    def __post_init__(self):
        if self.role not in _ROLES:
            raise ValueError(f"role must be one of {_ROLES}, got {self.role!r}")
        if self.level < 0 or self.replicate < 0 or self.counter < 0:
            raise ValueError("level, replicate and counter must be nonnegative")

    def _rng_at(self, counter: int, domain: int = _DYNAMICS_DOMAIN) -> np.random.Generator:
        seq = np.random.SeedSequence(
            [self.master_seed & _SEED_MASK, self.level, self.replicate, domain, counter]
        )
        return np.random.default_rng(seq)

    def normals(self, shape) -> np.ndarray:
        """Standard normals for the current counter; advances the counter."""
        rng = self._rng_at(self.counter)
        self.counter += 1
        return rng.standard_normal(shape)

    def init_rng(self, batch: int) -> np.random.Generator:
        """Generator for initial-datum sampling, separate from the dynamics domain."""
        return self._rng_at(batch, domain=_INIT_DOMAIN)


def white_increment(stream: NoiseStream, level: LevelParams) -> VectorField:
    """One single-level increment: i.i.d. N(0, tau*h^{-d}) per site and component."""
    if stream.role != "single":
        raise ValueError(f"white_increment needs a 'single' stream, got role {stream.role!r}")
    grid = level.grid
    scale = math.sqrt(level.tau) * grid.h ** (-grid.d / 2)
    g = stream.normals((grid.d,) + grid.shape)
    return VectorField(grid, g * scale)


def check_coupled_levels(kind: CouplingKind, fine: LevelParams, coarse: LevelParams) -> int:
    """Validate the grid/time ratios of a coupled pair; returns kappa_t."""
    if fine.grid.d != coarse.grid.d:
        raise ValueError("coupled levels must share the spatial dimension")
    r = kind.space_ratio
    if fine.grid.n != r * coarse.grid.n:
        raise ValueError(
            f"{kind.value} coupling needs n_fine = {r} * n_coarse, "
            f"got {fine.grid.n} vs {coarse.grid.n}"
        )
    kt = kind.time_ratio
    if abs(coarse.tau - kt * fine.tau) > 1e-9 * coarse.tau:
        raise ValueError(f"coupled levels need tau_coarse = {kt} * tau_fine")
    if kind is CouplingKind.FOURIER and (fine.grid.n % 2 or coarse.grid.n % 2):
        raise ValueError("Fourier coupling needs even point counts on both levels")
    return kt


def nn_pair_from_normals(
    gauss: np.ndarray, fine: LevelParams, coarse: LevelParams
) -> tuple[list[VectorField], VectorField]:
    """Linear map from standard normals, shape (4, d) + fine grid, to the coupled pair."""
    d = fine.grid.d
    scale_f = math.sqrt(fine.tau) * fine.grid.h ** (-d / 2)
    fine_incs = [VectorField(fine.grid, gauss[j] * scale_f) for j in range(gauss.shape[0])]

    summed = gauss.sum(axis=0)
    nc = coarse.grid.n
    blocked = summed.reshape((d,) + tuple(x for _ in range(d) for x in (nc, 2)))
    coarse_sum = blocked.sum(axis=tuple(2 + 2 * k for k in range(d)))
    scale_c = 2.0 ** (-d / 2) * math.sqrt(fine.tau) * coarse.grid.h ** (-d / 2)
    return fine_incs, VectorField(coarse.grid, coarse_sum * scale_c)


def nn_coupled_increments(
    stream: NoiseStream, fine: LevelParams, coarse: LevelParams
) -> tuple[list[VectorField], VectorField]:
    """Four fine increments and the coupled coarse increment for one coarse step."""
    kt = check_coupled_levels(CouplingKind.NEAREST_NEIGHBOUR, fine, coarse)
    if stream.role != "fine":
        raise ValueError(f"coupled generation needs a 'fine' stream, got role {stream.role!r}")
    gauss = stream.normals((kt, fine.grid.d) + fine.grid.shape)
    return nn_pair_from_normals(gauss, fine, coarse)


@lru_cache(maxsize=None)
def _alternating_sign(grid: TorusGrid) -> np.ndarray:
    # (-1)^{xi_1 + ... + xi_d} in fft bin layout; parity of the bin index matches
    # the parity of the signed frequency because n is even where this is used.
    s = np.ones(grid.shape)
    line = (-1.0) ** np.arange(grid.n)
    for ax in range(grid.d):
        shape = [1] * grid.d
        shape[ax] = grid.n
        s = s * line.reshape(shape)
    return s


def _reverse_bins(a: np.ndarray, d: int) -> np.ndarray:
    """Frequency negation xi -> -xi on the trailing d fft axes."""
    for ax in range(a.ndim - d, a.ndim):
        n = a.shape[ax]
        a = np.take(a, (-np.arange(n)) % n, axis=ax)
    return a


def _hermitianize(z: np.ndarray, d: int) -> np.ndarray:
    """Project i.i.d. complex Gaussians onto Hermitian symmetry, preserving E|.|^2 = 1."""
    return (z + np.conj(_reverse_bins(z, d))) / math.sqrt(2.0)


def synthesize_real(coeffs: np.ndarray, grid: TorusGrid) -> np.ndarray:
    """Realize sum_xi F_xi(x) c_xi with F_xi(x) = (2 pi)^{-d/2} exp(i xi.x).

    coeffs live on the trailing d fft axes (integer frequency bins).  The input
    must be Hermitian-symmetric; the imaginary residue is checked against a
    strict relative bound before projecting to real values.
    """
    d = grid.d
    axes = tuple(range(coeffs.ndim - d, coeffs.ndim))
    spec = coeffs * _alternating_sign(grid)
    z = np.fft.ifftn(spec, axes=axes) * (grid.n**d * (2.0 * np.pi) ** (-d / 2))
    scale = float(np.max(np.abs(z.real))) or 1.0
    residue = float(np.max(np.abs(z.imag))) / scale
    if residue > _IMAG_RESIDUE_LIMIT:
        raise RuntimeError(f"imaginary residue {residue:.3e} exceeds {_IMAG_RESIDUE_LIMIT:.1e}")
    return z.real


def fourier_pair_from_normals(
    raw: np.ndarray, fine: LevelParams, coarse: LevelParams
) -> tuple[list[VectorField], VectorField]:
    """Linear map from standard normals, shape (9, 2, d) + fine bins, to the coupled pair.

    raw[j, 0] and raw[j, 1] are the real and imaginary parts of the sub-step-j
    coefficient lattice before Hermitian projection.
    """
    d = fine.grid.d
    nf, nc = fine.grid.n, coarse.grid.n
    kt = raw.shape[0]

    z = (raw[:, 0] + 1j * raw[:, 1]) / math.sqrt(2.0)
    cf = _hermitianize(z, d) * math.sqrt(fine.tau)
    fine_fields = synthesize_real(cf, fine.grid)
    fine_incs = [VectorField(fine.grid, fine_fields[j]) for j in range(kt)]

    csum = cf.sum(axis=0)
    keep = np.r_[0 : nc // 2, nf - nc // 2 : nf]
    for ax in range(csum.ndim - d, csum.ndim):
        csum = np.take(csum, keep, axis=ax)

    # Bins with a -n_c/2 component lose their negation partner under the
    # restriction; re-symmetrize exactly those so the coarse field is real and
    # exactly white.  Interior bins remain the verbatim temporal sums.
    edge = np.zeros((nc,) * d, dtype=bool)
    for ax in range(d):
        idx = [slice(None)] * d
        idx[ax] = nc // 2
        edge[tuple(idx)] = True
    cc = np.where(edge, _hermitianize(csum, d), csum)
    coarse_field = synthesize_real(cc, coarse.grid)
    return fine_incs, VectorField(coarse.grid, coarse_field)


def fourier_coupled_increments(
    stream: NoiseStream, fine: LevelParams, coarse: LevelParams
) -> tuple[list[VectorField], VectorField]:
    """Nine fine increments and the coupled coarse increment for one coarse step."""
    kt = check_coupled_levels(CouplingKind.FOURIER, fine, coarse)
    if stream.role != "fine":
        raise ValueError(f"coupled generation needs a 'fine' stream, got role {stream.role!r}")
    raw = stream.normals((kt, 2, fine.grid.d) + fine.grid.shape)
    return fourier_pair_from_normals(raw, fine, coarse)


def coupled_increments(
    stream: NoiseStream, kind: CouplingKind, fine: LevelParams, coarse: LevelParams
) -> tuple[list[VectorField], VectorField]:
    if kind is CouplingKind.NEAREST_NEIGHBOUR:
        return nn_coupled_increments(stream, fine, coarse)
    return fourier_coupled_increments(stream, fine, coarse)


# --- exact diagnostics --------------------------------------------------------


def coupling_covariance(
    kind: CouplingKind, fine: LevelParams, coarse: LevelParams
) -> tuple[np.ndarray, tuple[int, int]]:
    """Exact covariance of the stacked coupled increments.

    The coupled construction is linear in its underlying standard normals, so
    probing it with unit vectors composes the aggregation maps into a matrix M
    and the exact covariance is M M^T (no sampling).  Outputs are stacked as
    [fine increment per substep ..., coarse increment], each flattened over
    (component, sites); returns (cov, (fine_block_size, coarse_block_size)).
    Intended for small grids; the probe count grows with the grid size.
    """
    kt = check_coupled_levels(kind, fine, coarse)
    d = fine.grid.d
    if kind is CouplingKind.NEAREST_NEIGHBOUR:
        in_shape: tuple[int, ...] = (kt, d) + fine.grid.shape
        build = nn_pair_from_normals
    else:
        in_shape = (kt, 2, d) + fine.grid.shape
        build = fourier_pair_from_normals
    probe = np.zeros(in_shape)
    flat = probe.reshape(-1)
    columns = []
    for i in range(flat.size):
        flat[i] = 1.0
        fine_incs, coarse_inc = build(probe, fine, coarse)
        columns.append(
            np.concatenate(
                [vf.components.ravel() for vf in fine_incs] + [coarse_inc.components.ravel()]
            )
        )
        flat[i] = 0.0
    m = np.stack(columns, axis=1)
    size_f = fine.grid.d * fine.grid.npoints
    size_c = coarse.grid.d * coarse.grid.npoints
    return m @ m.T, (size_f, size_c)


def fourier_basis_gram_error(grid: TorusGrid) -> float:
    """Max deviation of sum_xi F_xi(x) conj(F_xi(x')) from h^{-d} 1_{x=x'}.

    Direct summation over all frequencies and point pairs; the discrete
    Parseval identity in matrix form.
    """
    pts = np.stack([c.ravel() for c in grid.meshgrid()], axis=1)
    freq_1d = np.fft.fftfreq(grid.n, d=1.0 / grid.n)
    mesh = np.meshgrid(*([freq_1d] * grid.d), indexing="ij")
    freqs = np.stack([f.ravel() for f in mesh], axis=1)
    basis = np.exp(1j * pts @ freqs.T) * (2.0 * np.pi) ** (-grid.d / 2)
    gram = basis @ np.conj(basis.T)
    target = np.eye(grid.npoints) * grid.h ** (-grid.d)
    return float(np.max(np.abs(gram - target)))
