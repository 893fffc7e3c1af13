"""Level ladders, per-level statistics, the adaptive driver, and MC baselines.

Costs are counted in deterministic model units, grid points times time steps
per sample, so sample allocation does not depend on machine load; wall-clock
times are recorded separately for speed-up tables.  Replicates are evaluated
in fixed-size chunks whose boundaries do not depend on the worker count, and
per-replicate noise streams make every sample a pure function of
(master_seed, level, replicate); aggregation therefore yields identical
numbers for any worker count.
"""

from __future__ import annotations

import math
import multiprocessing as mp
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .dk import simulate_coupled_pair, simulate_path
from .grid import Field, interpolate
from .noise import CouplingKind, NoiseStream
from .pde import EXPLICIT_EULER, LevelParams, SchemeWeights, make_level, mfl_endpoint
from .qoi import InitMode, QoISpec, evaluate_P, prepare_initial
from .stats import MomentAccumulator

_CHUNK = 128
_MAX_DRIVER_ROUNDS = 1000

# Plain single-level draws use replicates >= this base so they never share a
# stream with coupled-difference samples at the same level.
SINGLE_LEVEL_REPLICATE_BASE = 1 << 31


@dataclass(frozen=True)
class LevelLadder:
    """Geometric space-time ladder with one CFL ratio across all levels."""

    coupling: CouplingKind
    levels: tuple[LevelParams, ...]

    def __post_init__(self):
        if not self.levels:
            raise ValueError("ladder needs at least one level")
        mus = {lv.mu for lv in self.levels}
        if len(mus) != 1:
            raise ValueError("all levels must share the CFL ratio")
        r = self.coupling.space_ratio
        for fine, coarse in zip(self.levels[1:], self.levels[:-1]):
            if fine.grid.n != r * coarse.grid.n:
                raise ValueError("level grids do not follow the coupling ratio")

    @property
    def max_level(self) -> int:
        return len(self.levels) - 1

    @property
    def mu(self) -> float:
        return self.levels[0].mu

    @property
    def horizon(self) -> float:
        return self.levels[0].horizon

    def cost_units(self, ell: int) -> float:
        lv = self.levels[ell]
        return float(lv.grid.npoints * lv.steps)


def make_ladder(
    d: int,
    n0: int,
    mu: float,
    max_level: int,
    coupling: CouplingKind,
    horizon: float,
    weights: SchemeWeights = EXPLICIT_EULER,
) -> LevelLadder:
    if max_level < 0:
        raise ValueError("max_level must be >= 0")
    r = coupling.space_ratio
    levels = tuple(
        make_level(ell, d, n0 * r**ell, mu, horizon, weights) for ell in range(max_level + 1)
    )
    return LevelLadder(coupling, levels)


@dataclass
class LevelStats:
    ell: int
    samples: int
    mean: float
    variance: float
    cost_per_sample: float

    @property
    def total_cost(self) -> float:
        return self.samples * self.cost_per_sample


@dataclass
class MlmcResult:
    estimate: float
    variance_bound: float
    epsilon: float
    stopping_level: int
    converged: bool
    levels: list[LevelStats]
    total_cost: float
    wall_time: float
    master_seed: int


@dataclass
class McResult:
    ell: int
    mean: float
    variance: float
    samples: int
    cost_units: float
    wall_time: float
    series: list[tuple[int, float, float]]


@dataclass
class VarredResult:
    """Equal-model-cost comparison of the fixed-allocation estimator against plain MC."""

    factor: float
    variance_mlmc: float
    variance_mc: float
    cost_units: float
    mc_samples: int
    level_stats: list[LevelStats]
    h_min: float
    wall_time: float


class Sampler:
    """Evaluates P_ell and Y_ell replicates for one (ladder, spec, seed) setup.

    Per level it caches the interpolated initial density and the deterministic
    mean-field endpoint used to center the fluctuation.
    """

    def __init__(self, ladder: LevelLadder, spec: QoISpec, master_seed: int):
        self.ladder = ladder
        self.spec = spec
        self.master_seed = master_seed
        self._refs: dict[int, tuple[Field, Field]] = {}

    def references(self, ell: int) -> tuple[Field, Field]:
        if ell not in self._refs:
            level = self.ladder.levels[ell]
            rho0bar_h = interpolate(self.spec.rho0bar, level.grid)
            self._refs[ell] = (rho0bar_h, mfl_endpoint(rho0bar_h, level))
        return self._refs[ell]

    def sample_P(self, ell: int, replicate: int) -> float:
        level = self.ladder.levels[ell]
        stream = NoiseStream(self.master_seed, ell, replicate, role="single")
        rho0bar_h, rhobar_T = self.references(ell)
        if self.spec.init_mode is InitMode.PARTICLES:
            ((rho0, _),) = prepare_initial(self.spec, [level], stream)
        else:
            rho0 = rho0bar_h
        rho_T = simulate_path(rho0, level, self.spec.N, stream)
        return evaluate_P(rho_T, rhobar_T, self.spec, level)

    def sample_Y(self, ell: int, replicate: int) -> float:
        """P_0 on level 0; the coupled difference P_ell - P_{ell-1} above."""
        if ell == 0:
            return self.sample_P(0, replicate)
        fine = self.ladder.levels[ell]
        coarse = self.ladder.levels[ell - 1]
        stream = NoiseStream(self.master_seed, ell, replicate, role="fine")
        rho0bar_f, rhobar_T_f = self.references(ell)
        rho0bar_c, rhobar_T_c = self.references(ell - 1)
        if self.spec.init_mode is InitMode.PARTICLES:
            (rho0_f, _), (rho0_c, _) = prepare_initial(self.spec, [fine, coarse], stream)
        else:
            rho0_f, rho0_c = rho0bar_f, rho0bar_c
        rho_T_f, rho_T_c = simulate_coupled_pair(
            rho0_f, rho0_c, fine, coarse, self.ladder.coupling, self.spec.N, stream
        )
        p_f = evaluate_P(rho_T_f, rhobar_T_f, self.spec, fine)
        p_c = evaluate_P(rho_T_c, rhobar_T_c, self.spec, coarse)
        return p_f - p_c

    def values(self, ell: int, replicates, kind: str = "Y") -> np.ndarray:
        fn = self.sample_Y if kind == "Y" else self.sample_P
        return np.array([fn(ell, r) for r in replicates], dtype=float)


def sample_Y(ell: int, ladder: LevelLadder, spec: QoISpec, replicate: int, master_seed: int = 0) -> float:
    return Sampler(ladder, spec, master_seed).sample_Y(ell, replicate)


def _chunk_worker(payload):
    ladder, spec, master_seed, ell, kind, start, stop = payload
    return Sampler(ladder, spec, master_seed).values(ell, range(start, stop), kind)


def evaluate_samples(
    ladder: LevelLadder,
    spec: QoISpec,
    master_seed: int,
    ell: int,
    start: int,
    count: int,
    kind: str = "Y",
    workers: int = 1,
    sampler: Sampler | None = None,
) -> np.ndarray:
    """Replicates start..start+count-1, identical output for any worker count."""
    if count <= 0:
        return np.empty(0)
    if workers <= 1:
        sampler = sampler or Sampler(ladder, spec, master_seed)
        return sampler.values(ell, range(start, start + count), kind)
    payloads = [
        (ladder, spec, master_seed, ell, kind, lo, min(lo + _CHUNK, start + count))
        for lo in range(start, start + count, _CHUNK)
    ]
    with ProcessPoolExecutor(max_workers=workers, mp_context=mp.get_context("fork")) as ex:
        parts = list(ex.map(_chunk_worker, payloads))
    return np.concatenate(parts)


def optimal_samples(variances, costs, epsilon: float) -> np.ndarray:
    """Per-level sample counts ceil(2 eps^-2 sqrt(V/C) sum_k sqrt(V_k C_k)), floored at 2."""
    v = np.asarray(variances, dtype=float)
    c = np.asarray(costs, dtype=float)
    if np.any(v < 0.0) or np.any(c <= 0.0) or epsilon <= 0.0:
        raise ValueError("need variances >= 0, costs > 0 and epsilon > 0")
    total = np.sum(np.sqrt(v * c))
    m = np.ceil(2.0 * epsilon**-2 * np.sqrt(v / c) * total)
    return np.maximum(m, 2).astype(np.int64)


def converged(level_means, alpha: float, epsilon: float) -> bool:
    """Systematic-error check on the last three level means.

    True iff max_{i in 0..2} 2^{-i*alpha} |Yhat_{L-i}| / (2^alpha - 1) < eps/sqrt(2),
    with the means ordered by level so the last entry is level L.
    """
    means = [float(x) for x in level_means]
    if len(means) < 3:
        raise ValueError("convergence check needs at least 3 sampled levels")
    tail = means[-3:]
    worst = max(2.0 ** (-i * alpha) * abs(tail[2 - i]) for i in range(3))
    return worst / (2.0**alpha - 1.0) < epsilon / math.sqrt(2.0)


def run_mlmc(
    ladder: LevelLadder,
    spec: QoISpec,
    epsilon: float,
    initial_samples: int = 100,
    master_seed: int = 0,
    alpha: float = 2.0,
    workers: int = 1,
) -> MlmcResult:
    """Adaptive driver: grow per-level sample targets to the optimal allocation,
    add levels while the systematic-error check fails, stop at the ladder cap.

    Reaching the cap without convergence is reported in the result flag, not
    raised.  Earlier samples are always reused when targets grow.
    """
    if epsilon <= 0.0:
        raise ValueError("epsilon must be positive")
    if initial_samples < 2:
        raise ValueError("need at least 2 initial samples per level")
    t0 = time.perf_counter()
    L = min(2, ladder.max_level)
    accs = [MomentAccumulator() for _ in range(L + 1)]
    targets = [initial_samples] * (L + 1)
    shared = Sampler(ladder, spec, master_seed) if workers <= 1 else None

    is_converged = False
    for _ in range(_MAX_DRIVER_ROUNDS):
        for ell in range(L + 1):
            extra = targets[ell] - accs[ell].count
            if extra > 0:
                vals = evaluate_samples(
                    ladder, spec, master_seed, ell, accs[ell].count, extra,
                    kind="Y", workers=workers, sampler=shared,
                )
                accs[ell].extend(vals)
        variances = [acc.variance for acc in accs]
        costs = [ladder.cost_units(ell) for ell in range(L + 1)]
        optimal = optimal_samples(variances, costs, epsilon)
        targets = [max(t, int(m)) for t, m in zip(targets, optimal)]
        if any(t > acc.count for t, acc in zip(targets, accs)):
            continue
        means = [acc.mean for acc in accs]
        if L >= 2 and converged(means, alpha, epsilon):
            is_converged = True
            break
        if L == ladder.max_level:
            break
        L += 1
        accs.append(MomentAccumulator())
        targets.append(initial_samples)
    else:
        raise RuntimeError("sample targets failed to stabilize")

    level_stats = [
        LevelStats(ell, accs[ell].count, accs[ell].mean, accs[ell].variance, ladder.cost_units(ell))
        for ell in range(L + 1)
    ]
    return MlmcResult(
        estimate=float(sum(s.mean for s in level_stats)),
        variance_bound=float(sum(s.variance / s.samples for s in level_stats)),
        epsilon=epsilon,
        stopping_level=L,
        converged=is_converged,
        levels=level_stats,
        total_cost=float(sum(s.total_cost for s in level_stats)),
        wall_time=time.perf_counter() - t0,
        master_seed=master_seed,
    )


def run_mc(
    ladder: LevelLadder,
    ell: int,
    spec: QoISpec,
    master_seed: int = 0,
    samples: int | None = None,
    epsilon: float | None = None,
    pilot: int = 100,
    workers: int = 1,
    series_stride: int = 0,
    replicate_base: int = SINGLE_LEVEL_REPLICATE_BASE,
) -> McResult:
    """Plain Monte Carlo of P_ell on one level.

    With an epsilon budget the sample count is ceil(2 Vhat / eps^2) with Vhat
    estimated from a pilot run (pilot samples are reused).  series_stride > 0
    records (samples, cost, estimator variance) every that many samples.
    """
    if (samples is None) == (epsilon is None):
        raise ValueError("give exactly one of samples or epsilon")
    t0 = time.perf_counter()
    if samples is None:
        if epsilon <= 0.0 or pilot < 2:
            raise ValueError("need epsilon > 0 and pilot >= 2")
        pilot_vals = evaluate_samples(
            ladder, spec, master_seed, ell, replicate_base, pilot, kind="P", workers=workers
        )
        v_hat = float(np.var(pilot_vals, ddof=1))
        samples = max(pilot, math.ceil(2.0 * v_hat / epsilon**2))
        values = pilot_vals
        if samples > pilot:
            more = evaluate_samples(
                ladder, spec, master_seed, ell, replicate_base + pilot, samples - pilot,
                kind="P", workers=workers,
            )
            values = np.concatenate([values, more])
    else:
        if samples < 2:
            raise ValueError("need at least 2 samples")
        values = evaluate_samples(
            ladder, spec, master_seed, ell, replicate_base, samples, kind="P", workers=workers
        )

    series = []
    if series_stride > 0:
        for m in range(series_stride, samples + 1, series_stride):
            series.append(
                (m, m * ladder.cost_units(ell), float(np.var(values[:m], ddof=1)) / m)
            )
    return McResult(
        ell=ell,
        mean=float(np.mean(values)),
        variance=float(np.var(values, ddof=1)),
        samples=int(samples),
        cost_units=samples * ladder.cost_units(ell),
        wall_time=time.perf_counter() - t0,
        series=series,
    )


def variance_reduction_experiment(
    ladder: LevelLadder,
    spec: QoISpec,
    finest_samples: int,
    master_seed: int = 0,
    growth: int = 4,
    workers: int = 1,
) -> VarredResult:
    """Fixed geometric allocation M_{ell-1} = growth * M_ell, then an equal-cost
    plain MC run on the finest level; returns the estimator-variance ratio."""
    if finest_samples < 2:
        raise ValueError("need at least 2 finest-level samples")
    t0 = time.perf_counter()
    L = ladder.max_level
    counts = [finest_samples * growth ** (L - ell) for ell in range(L + 1)]
    level_stats = []
    for ell in range(L + 1):
        vals = evaluate_samples(
            ladder, spec, master_seed, ell, 0, counts[ell], kind="Y", workers=workers
        )
        acc = MomentAccumulator().extend(vals)
        level_stats.append(LevelStats(ell, acc.count, acc.mean, acc.variance, ladder.cost_units(ell)))
    var_mlmc = float(sum(s.variance / s.samples for s in level_stats))
    cost = float(sum(s.total_cost for s in level_stats))

    mc_samples = max(2, int(cost / ladder.cost_units(L)))
    mc = run_mc(ladder, L, spec, master_seed=master_seed, samples=mc_samples, workers=workers)
    var_mc = mc.variance / mc.samples
    return VarredResult(
        factor=var_mc / var_mlmc,
        variance_mlmc=var_mlmc,
        variance_mc=var_mc,
        cost_units=cost,
        mc_samples=mc_samples,
        level_stats=level_stats,
        h_min=ladder.levels[L].grid.h,
        wall_time=time.perf_counter() - t0,
    )
