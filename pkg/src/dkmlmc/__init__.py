"""Multilevel Monte Carlo simulation of conservative stochastic density
dynamics (Dean-Kawasaki type) on the periodic torus."""

from .dk import DkState, dk_step, simulate_coupled_pair, simulate_path
from .grid import (
    Field,
    TorusGrid,
    VectorField,
    divergence,
    gradient,
    inner,
    interpolate,
    laplacian,
    load_field,
    make_grid,
    mass,
    norm,
    save_field,
)
from .mlmc import (
    LevelLadder,
    LevelStats,
    McResult,
    MlmcResult,
    Sampler,
    VarredResult,
    converged,
    make_ladder,
    optimal_samples,
    run_mc,
    run_mlmc,
    sample_Y,
    variance_reduction_experiment,
)
from .noise import (
    CouplingKind,
    NoiseStream,
    coupling_covariance,
    fourier_coupled_increments,
    nn_coupled_increments,
    white_increment,
)
from .pde import (
    CRANK_NICOLSON,
    EXPLICIT_EULER,
    LevelParams,
    SchemeWeights,
    backward_test,
    fluctuation_variance_oracle,
    make_level,
    martingale_pairing,
    solve_mfl,
    theta_step,
)
from .qoi import InitMode, QoISpec, builtin_density, evaluate_P, fluctuation, prepare_initial
from .stats import MomentAccumulator, fit_decay_slope, merge

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
