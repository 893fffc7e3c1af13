"""Config-driven experiment runner and artifact emission.

Configs are flat declarative key-value documents (YAML or JSON, no
expressions).  Unknown keys are rejected.  Every run writes CSV tables plus one
summary.json holding the validated config echo and the results; feeding that
summary back in as a config reproduces the run, since the echo is parsed from
its "config" section.  Wall-clock timings live only in the JSON so CSV content
is byte-stable across repeated runs and worker counts.

Exit codes: 0 success (an unconverged MLMC result is still a success, flagged
in the output), 2 config error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .grid import Field, TorusGrid, interpolate, load_field, mass, save_field
from .mlmc import (
    SINGLE_LEVEL_REPLICATE_BASE,
    LevelLadder,
    evaluate_samples,
    make_ladder,
    run_mc,
    run_mlmc,
    variance_reduction_experiment,
)
from .noise import CouplingKind, coupling_covariance, fourier_basis_gram_error
from .pde import SchemeWeights, make_level, solve_mfl
from .qoi import DENSITY_NAMES, PHI_FUNCTIONS, PSI_FUNCTIONS, InitMode, QoISpec, builtin_density
from .stats import MomentAccumulator

OUTPUT_DIR_ENV = "DKMLMC_OUTPUT_DIR"

KINDS = ("mlmc", "mc", "varred", "convergence-table", "mfl", "noise-selftest")
_COUPLINGS = {"nn": CouplingKind.NEAREST_NEIGHBOUR, "fourier": CouplingKind.FOURIER}
_WRAPPER_KEYS = {"schema", "config", "results"}

_REQUIRED = (
    "kind",
    "dimension",
    "n0",
    "mu",
    "coupling",
    "l_max",
    "particles",
    "horizon",
    "psi",
    "phi",
    "density",
    "init_mode",
    "master_seed",
)
_OPTIONAL = (
    "workers",
    "output_dir",
    "b0",
    "alpha",
    "epsilons",
    "initial_samples",
    "mc_level",
    "mc_samples",
    "mc_epsilon",
    "mc_pilot_samples",
    "mc_cost_cap_samples",
    "series_stride",
    "varred_finest_samples",
    "varred_levels",
    "varred_growth",
    "table_samples",
    "mfl_level",
    "snapshot_steps",
    "min_cell_density",
)


class ConfigError(ValueError):
    """Carries the full list of config violations."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


@dataclass
class ExperimentConfig:
    kind: str
    dimension: int
    n0: int
    mu: float
    coupling: str
    l_max: int
    particles: float
    horizon: float
    psi: str
    phi: str
    density: str
    init_mode: str
    master_seed: int
    workers: int = 1
    output_dir: str = "."
    b0: float = 0.0
    alpha: float = 2.0
    epsilons: list = field(default_factory=list)
    initial_samples: int = 100
    mc_level: int | None = None
    mc_samples: int | None = None
    mc_epsilon: float | None = None
    mc_pilot_samples: int = 100
    mc_cost_cap_samples: int = 20000
    series_stride: int = 0
    varred_finest_samples: int = 100
    varred_levels: list = field(default_factory=list)
    varred_growth: int = 4
    table_samples: int = 100
    mfl_level: int | None = None
    snapshot_steps: list = field(default_factory=list)
    min_cell_density: float = 0.0

    def weights(self) -> SchemeWeights:
        return SchemeWeights(self.b0, 1.0 - self.b0)

    def coupling_kind(self) -> CouplingKind:
        return _COUPLINGS[self.coupling]

    def ladder(self) -> LevelLadder:
        return make_ladder(
            self.dimension, self.n0, self.mu, self.l_max,
            self.coupling_kind(), self.horizon, self.weights(),
        )

    def spec(self) -> QoISpec:
        return QoISpec(
            N=self.particles,
            T=self.horizon,
            psi=PSI_FUNCTIONS[self.psi],
            phi=PHI_FUNCTIONS[self.phi],
            rho0bar=builtin_density(self.density, self.dimension),
            init_mode=InitMode(self.init_mode),
        )

    def echo(self) -> dict:
        out = {}
        for name in _REQUIRED + _OPTIONAL:
            value = getattr(self, name)
            if value is None:
                continue
            out[name] = value
        return out


def _as_int(value, name, violations, minimum=None):
    if isinstance(value, bool) or not isinstance(value, int):
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        else:
            violations.append(f"{name}: expected an integer, got {value!r}")
            return None
    if minimum is not None and value < minimum:
        violations.append(f"{name}: must be >= {minimum}, got {value}")
        return None
    return value


def _as_float(value, name, violations, positive=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        violations.append(f"{name}: expected a number, got {value!r}")
        return None
    value = float(value)
    if positive and value <= 0.0:
        violations.append(f"{name}: must be positive, got {value}")
        return None
    return value


def parse_config(document) -> ExperimentConfig:
    """Validate a config mapping; raises ConfigError listing every violation.

    A summary.json document (with a "config" section) is accepted directly,
    which makes the emitted summaries round-trip as configs.
    """
    if not isinstance(document, dict):
        raise ConfigError(["config document must be a key-value mapping"])
    if "config" in document and set(document) <= _WRAPPER_KEYS:
        document = document["config"]
        if not isinstance(document, dict):
            raise ConfigError(["summary 'config' section must be a mapping"])

    violations = []
    known = set(_REQUIRED) | set(_OPTIONAL)
    unknown = sorted(set(document) - known)
    if unknown:
        violations.append(f"unknown keys: {', '.join(unknown)}")
    missing = sorted(k for k in _REQUIRED if k not in document)
    if missing:
        violations.append(f"missing required keys: {', '.join(missing)}")
    if violations and missing:
        raise ConfigError(violations)

    cfg = {}
    cfg["kind"] = document.get("kind")
    if cfg["kind"] not in KINDS:
        violations.append(f"kind: must be one of {KINDS}, got {cfg['kind']!r}")
    cfg["dimension"] = _as_int(document.get("dimension"), "dimension", violations, minimum=1)
    cfg["n0"] = _as_int(document.get("n0"), "n0", violations, minimum=2)
    cfg["mu"] = _as_float(document.get("mu"), "mu", violations, positive=True)
    cfg["coupling"] = document.get("coupling")
    if cfg["coupling"] not in _COUPLINGS:
        violations.append(f"coupling: must be one of {sorted(_COUPLINGS)}, got {cfg['coupling']!r}")
    cfg["l_max"] = _as_int(document.get("l_max"), "l_max", violations, minimum=0)
    cfg["particles"] = _as_float(document.get("particles"), "particles", violations, positive=True)
    if cfg["particles"] is not None and cfg["particles"] < 1:
        violations.append(f"particles: must be >= 1, got {cfg['particles']}")
    cfg["horizon"] = _as_float(document.get("horizon"), "horizon", violations, positive=True)
    cfg["psi"] = document.get("psi")
    if cfg["psi"] not in PSI_FUNCTIONS:
        violations.append(f"psi: must be one of {sorted(PSI_FUNCTIONS)}, got {cfg['psi']!r}")
    cfg["phi"] = document.get("phi")
    if cfg["phi"] not in PHI_FUNCTIONS:
        violations.append(f"phi: must be one of {sorted(PHI_FUNCTIONS)}, got {cfg['phi']!r}")
    cfg["density"] = document.get("density")
    if cfg["density"] not in DENSITY_NAMES:
        violations.append(f"density: must be one of {DENSITY_NAMES}, got {cfg['density']!r}")
    cfg["init_mode"] = document.get("init_mode")
    if cfg["init_mode"] not in ("deterministic", "particles"):
        violations.append(f"init_mode: must be deterministic or particles, got {cfg['init_mode']!r}")
    cfg["master_seed"] = _as_int(document.get("master_seed"), "master_seed", violations, minimum=0)

    cfg["workers"] = _as_int(document.get("workers", 1), "workers", violations, minimum=1)
    cfg["output_dir"] = str(document.get("output_dir", "."))
    cfg["b0"] = _as_float(document.get("b0", 0.0), "b0", violations)
    if cfg["b0"] is not None and not 0.0 <= cfg["b0"] <= 1.0:
        violations.append(f"b0: must lie in [0, 1], got {cfg['b0']}")
    cfg["alpha"] = _as_float(document.get("alpha", 2.0), "alpha", violations, positive=True)

    eps = document.get("epsilons", [])
    if not isinstance(eps, list) or any(not isinstance(e, (int, float)) or e <= 0 for e in eps):
        violations.append("epsilons: expected a list of positive numbers")
        eps = []
    cfg["epsilons"] = [float(e) for e in eps]
    cfg["initial_samples"] = _as_int(
        document.get("initial_samples", 100), "initial_samples", violations, minimum=2
    )
    cfg["mc_level"] = (
        _as_int(document["mc_level"], "mc_level", violations, minimum=0)
        if "mc_level" in document
        else None
    )
    cfg["mc_samples"] = (
        _as_int(document["mc_samples"], "mc_samples", violations, minimum=2)
        if "mc_samples" in document
        else None
    )
    cfg["mc_epsilon"] = (
        _as_float(document["mc_epsilon"], "mc_epsilon", violations, positive=True)
        if "mc_epsilon" in document
        else None
    )
    cfg["mc_pilot_samples"] = _as_int(
        document.get("mc_pilot_samples", 100), "mc_pilot_samples", violations, minimum=2
    )
    cfg["mc_cost_cap_samples"] = _as_int(
        document.get("mc_cost_cap_samples", 20000), "mc_cost_cap_samples", violations, minimum=2
    )
    cfg["series_stride"] = _as_int(document.get("series_stride", 0), "series_stride", violations, minimum=0)
    cfg["varred_finest_samples"] = _as_int(
        document.get("varred_finest_samples", 100), "varred_finest_samples", violations, minimum=2
    )
    levels = document.get("varred_levels", [])
    if not isinstance(levels, list) or any(isinstance(x, bool) or not isinstance(x, int) for x in levels):
        violations.append("varred_levels: expected a list of integers")
        levels = []
    cfg["varred_levels"] = list(levels)
    cfg["varred_growth"] = _as_int(document.get("varred_growth", 4), "varred_growth", violations, minimum=2)
    cfg["table_samples"] = _as_int(document.get("table_samples", 100), "table_samples", violations, minimum=2)
    cfg["mfl_level"] = (
        _as_int(document["mfl_level"], "mfl_level", violations, minimum=0)
        if "mfl_level" in document
        else None
    )
    snaps = document.get("snapshot_steps", [])
    if not isinstance(snaps, list) or any(isinstance(x, bool) or not isinstance(x, int) or x < 0 for x in snaps):
        violations.append("snapshot_steps: expected a list of nonnegative integers")
        snaps = []
    cfg["snapshot_steps"] = list(snaps)
    cfg["min_cell_density"] = _as_float(
        document.get("min_cell_density", 0.0), "min_cell_density", violations
    )

    if violations:
        raise ConfigError(violations)

    _validate_semantics(cfg, violations)
    if violations:
        raise ConfigError(violations)
    return ExperimentConfig(**cfg)


def _validate_semantics(cfg, violations):
    d, n0, mu = cfg["dimension"], cfg["n0"], cfg["mu"]
    horizon = cfg["horizon"]
    kind = cfg["kind"]
    coupling = _COUPLINGS[cfg["coupling"]]
    ratio = coupling.space_ratio

    if cfg["b0"] == 0.0 and mu > 1.0 / d + 1e-12:
        violations.append(
            f"CFL violation: the explicit scheme (b0 = 0) requires mu <= 1/d, "
            f"got mu={mu} with d={d}"
        )
    if coupling is CouplingKind.FOURIER and n0 % 2:
        violations.append(f"Fourier coupling needs an even n0, got {n0}")
    for ell in range(cfg["l_max"] + 1):
        n_ell = n0 * ratio**ell
        tau = mu * (2.0 * np.pi / n_ell) ** 2
        steps = round(horizon / tau)
        if steps < 1 or abs(steps * tau - horizon) > 1e-9 * max(horizon, tau):
            violations.append(
                f"horizon {horizon} is not an integer multiple of tau_{ell}={tau}"
            )
    if cfg["min_cell_density"] > 0.0 and math.isfinite(cfg["particles"]):
        n_top = n0 * ratio ** cfg["l_max"]
        h_min = 2.0 * np.pi / n_top
        density = cfg["particles"] * h_min**d
        if density < cfg["min_cell_density"]:
            violations.append(
                f"average particle density N*h^d={density} on the finest level is below "
                f"the requested floor {cfg['min_cell_density']}"
            )
    if cfg["init_mode"] == "particles" and not float(cfg["particles"]).is_integer():
        violations.append("init_mode=particles needs an integer particle count")
    if cfg["density"] in ("reg", "irreg") and d != 2:
        violations.append(f"density {cfg['density']!r} is two-dimensional, got dimension {d}")

    if kind == "mlmc" and not cfg["epsilons"]:
        violations.append("kind=mlmc requires a nonempty epsilons list")
    if kind == "mc" and (cfg["mc_samples"] is None) == (cfg["mc_epsilon"] is None):
        violations.append("kind=mc requires exactly one of mc_samples or mc_epsilon")
    for key in ("mc_level", "mfl_level"):
        if cfg[key] is not None and cfg[key] > cfg["l_max"]:
            violations.append(f"{key} exceeds l_max")
    if kind == "varred":
        for L in cfg["varred_levels"]:
            if not 0 <= L <= cfg["l_max"]:
                violations.append(f"varred_levels entry {L} outside 0..l_max")


# --- emission helpers ---------------------------------------------------------


def _fmt(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def _write_csv(path: Path, columns, rows) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def _write_summary(outdir: Path, config: ExperimentConfig, results: dict) -> None:
    doc = {"schema": "dkmlmc-summary/1", "config": config.echo(), "results": results}
    with open(outdir / "summary.json", "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _level_rows(ladder: LevelLadder, stats):
    rows = []
    for s in stats:
        lv = ladder.levels[s.ell]
        rows.append(
            (s.ell, lv.grid.n, lv.tau, lv.steps, s.samples, s.mean, s.variance,
             s.cost_per_sample, s.total_cost)
        )
    return rows


_LEVEL_COLUMNS = (
    "level", "n", "tau", "steps", "samples", "mean_Y", "var_Y",
    "cost_per_sample", "total_cost",
)


# --- experiment kinds ---------------------------------------------------------


def _run_mlmc_kind(config: ExperimentConfig, outdir: Path) -> dict:
    ladder = config.ladder()
    spec = config.spec()
    rows = []
    per_eps = []
    pilot_cache: dict[int, tuple[float, float]] = {}
    for i, eps in enumerate(config.epsilons):
        res = run_mlmc(
            ladder, spec, eps,
            initial_samples=config.initial_samples,
            master_seed=config.master_seed,
            alpha=config.alpha,
            workers=config.workers,
        )
        _write_csv(outdir / f"mlmc_levels_eps{i}.csv", _LEVEL_COLUMNS, _level_rows(ladder, res.levels))

        L = res.stopping_level
        if L not in pilot_cache:
            pilot = run_mc(
                ladder, L, spec, master_seed=config.master_seed,
                samples=config.mc_pilot_samples, workers=config.workers,
            )
            pilot_cache[L] = (pilot.variance, pilot.wall_time)
        v_hat, pilot_time = pilot_cache[L]
        mc_needed = max(2, math.ceil(2.0 * v_hat / eps**2))
        extrapolated = mc_needed > config.mc_cost_cap_samples
        mc_entry = {"samples": mc_needed, "extrapolated": extrapolated}
        if not extrapolated:
            mc = run_mc(
                ladder, L, spec, master_seed=config.master_seed + 1,
                samples=mc_needed, workers=config.workers,
            )
            mc_entry.update(mean=mc.mean, variance=mc.variance, wall_time=mc.wall_time)
        mc_cost = mc_needed * ladder.cost_units(L)

        rows.append(
            (eps, res.estimate, res.variance_bound, res.converged, res.stopping_level,
             res.total_cost, mc_cost, extrapolated)
        )
        per_eps.append(
            {
                "epsilon": eps,
                "estimate": res.estimate,
                "variance_bound": res.variance_bound,
                "converged": res.converged,
                "stopping_level": res.stopping_level,
                "mlmc_cost_units": res.total_cost,
                "mlmc_wall_time": res.wall_time,
                "mc_cost_units": mc_cost,
                "mc_pilot_wall_time": pilot_time,
                "mc": mc_entry,
            }
        )
    _write_csv(
        outdir / "mlmc_results.csv",
        ("epsilon", "estimate", "variance_bound", "converged", "stopping_level",
         "mlmc_cost_units", "mc_cost_units", "mc_extrapolated"),
        rows,
    )
    return {"runs": per_eps}


def _run_mc_kind(config: ExperimentConfig, outdir: Path) -> dict:
    ladder = config.ladder()
    spec = config.spec()
    ell = config.mc_level if config.mc_level is not None else config.l_max
    res = run_mc(
        ladder, ell, spec,
        master_seed=config.master_seed,
        samples=config.mc_samples,
        epsilon=config.mc_epsilon,
        pilot=config.mc_pilot_samples,
        workers=config.workers,
        series_stride=config.series_stride,
    )
    _write_csv(
        outdir / "mc_series.csv",
        ("samples", "cost_units", "estimator_variance"),
        res.series,
    )
    return {
        "level": res.ell,
        "mean": res.mean,
        "variance": res.variance,
        "samples": res.samples,
        "cost_units": res.cost_units,
        "wall_time": res.wall_time,
    }


def _run_varred_kind(config: ExperimentConfig, outdir: Path) -> dict:
    full = config.ladder()
    spec = config.spec()
    levels = config.varred_levels or [config.l_max]
    rows = []
    entries = []
    for L in levels:
        ladder = LevelLadder(full.coupling, full.levels[: L + 1])
        res = variance_reduction_experiment(
            ladder, spec, config.varred_finest_samples,
            master_seed=config.master_seed,
            growth=config.varred_growth,
            workers=config.workers,
        )
        rows.append(
            (L, res.h_min, res.factor, res.variance_mlmc, res.variance_mc,
             res.cost_units, res.mc_samples)
        )
        entries.append(
            {
                "L": L,
                "h_min": res.h_min,
                "factor": res.factor,
                "variance_mlmc": res.variance_mlmc,
                "variance_mc": res.variance_mc,
                "cost_units": res.cost_units,
                "mc_samples": res.mc_samples,
                "wall_time": res.wall_time,
            }
        )
    _write_csv(
        outdir / "varred.csv",
        ("L", "h_min", "factor", "var_mlmc", "var_mc", "cost_units", "mc_samples"),
        rows,
    )
    return {"runs": entries}


def _run_table_kind(config: ExperimentConfig, outdir: Path) -> dict:
    ladder = config.ladder()
    spec = config.spec()
    rows = []
    for ell in range(config.l_max + 1):
        y_vals = evaluate_samples(
            ladder, spec, config.master_seed, ell, 0, config.table_samples,
            kind="Y", workers=config.workers,
        )
        p_vals = evaluate_samples(
            ladder, spec, config.master_seed, ell, SINGLE_LEVEL_REPLICATE_BASE,
            config.table_samples, kind="P", workers=config.workers,
        )
        acc_y = MomentAccumulator().extend(y_vals)
        acc_p = MomentAccumulator().extend(p_vals)
        lv = ladder.levels[ell]
        rows.append(
            (ell, lv.grid.n, lv.tau, lv.steps, config.table_samples,
             acc_y.mean, acc_y.variance, acc_p.mean, acc_p.variance,
             ladder.cost_units(ell))
        )
    _write_csv(
        outdir / "convergence_table.csv",
        ("level", "n", "tau", "steps", "samples", "mean_Y", "var_Y",
         "mean_P", "var_P", "cost_units"),
        rows,
    )
    return {"levels": config.l_max + 1, "samples": config.table_samples}


def _run_mfl_kind(config: ExperimentConfig, outdir: Path) -> dict:
    ladder = config.ladder()
    ell = config.mfl_level if config.mfl_level is not None else config.l_max
    level = ladder.levels[ell]
    spec = config.spec()
    rho0 = interpolate(spec.rho0bar, level.grid)
    traj = solve_mfl(rho0, level)
    hd = level.grid.h**level.grid.d
    rows = [
        (m, m * level.tau, hd * float(traj[m].sum()), float(traj[m].min()), float(traj[m].max()))
        for m in range(level.steps + 1)
    ]
    _write_csv(outdir / "mfl.csv", ("step", "time", "mass", "min", "max"), rows)
    save_field(outdir / "mfl_final.bin", Field(level.grid, traj[-1]))
    for m in config.snapshot_steps:
        if m <= level.steps:
            save_field(outdir / f"mfl_snap_{m}.bin", Field(level.grid, traj[m]))
    return {"level": ell, "steps": level.steps, "final_field": "mfl_final.bin"}


def _run_noise_selftest(config: ExperimentConfig, outdir: Path) -> dict:
    rows = []

    def exact_rows(kind, n_fine, d=1, mu=0.25):
        fine = make_level(1, d, n_fine, mu, mu * (2.0 * np.pi * kind.space_ratio / n_fine) ** 2)
        coarse = make_level(0, d, n_fine // kind.space_ratio, mu, fine.horizon)
        cov, blocks = coupling_covariance(kind, fine, coarse)
        kt = kind.time_ratio
        size_f = blocks[0]
        tgt_f = fine.tau * fine.grid.h ** (-d)
        tgt_c = coarse.tau * coarse.grid.h ** (-d)
        worst_fine = worst_cross = 0.0
        for j in range(kt):
            block = cov[j * size_f : (j + 1) * size_f, j * size_f : (j + 1) * size_f]
            worst_fine = max(worst_fine, float(np.max(np.abs(block - tgt_f * np.eye(size_f)))))
            for k in range(j + 1, kt):
                cross = cov[j * size_f : (j + 1) * size_f, k * size_f : (k + 1) * size_f]
                worst_cross = max(worst_cross, float(np.max(np.abs(cross))))
        cblock = cov[kt * size_f :, kt * size_f :]
        worst_coarse = float(np.max(np.abs(cblock - tgt_c * np.eye(cblock.shape[0]))))
        rows.append((kind.value, "fine_cov_max_abs_err", n_fine, worst_fine, 0.0, worst_fine))
        rows.append((kind.value, "substep_cross_cov_max_abs", n_fine, worst_cross, 0.0, worst_cross))
        rows.append((kind.value, "coarse_cov_max_abs_err", n_fine, worst_coarse, 0.0, worst_coarse))

    exact_rows(CouplingKind.NEAREST_NEIGHBOUR, 4)
    exact_rows(CouplingKind.NEAREST_NEIGHBOUR, 6)
    exact_rows(CouplingKind.FOURIER, 6)
    gram = fourier_basis_gram_error(TorusGrid(1, 6))
    rows.append(("fourier", "basis_gram_max_abs_err", 6, gram, 0.0, gram))

    _write_csv(
        outdir / "noise_selftest.csv",
        ("coupling", "check", "n_fine", "value", "target", "abs_error"),
        rows,
    )
    worst = max(r[5] for r in rows)
    return {"checks": len(rows), "worst_abs_error": worst, "passed": bool(worst < 1e-12)}


_RUNNERS = {
    "mlmc": _run_mlmc_kind,
    "mc": _run_mc_kind,
    "varred": _run_varred_kind,
    "convergence-table": _run_table_kind,
    "mfl": _run_mfl_kind,
    "noise-selftest": _run_noise_selftest,
}


def run(config: ExperimentConfig, output_dir: str | None = None) -> dict:
    """Execute the configured experiment; returns the results dict written to JSON."""
    outdir = Path(os.environ.get(OUTPUT_DIR_ENV) or output_dir or config.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    results = _RUNNERS[config.kind](config, outdir)
    results["total_wall_time"] = time.perf_counter() - t0
    _write_summary(outdir, config, results)
    return results


def load_config_file(path) -> ExperimentConfig:
    with open(path) as fh:
        document = yaml.safe_load(fh)
    return parse_config(document)


def _inspect(path) -> int:
    f = load_field(path)
    print(f"d={f.grid.d}")
    print(f"n={f.grid.n}")
    print(f"h={f.grid.h!r}")
    print(f"mass={mass(f)!r}")
    print(f"min={float(f.values.min())!r}")
    print(f"max={float(f.values.max())!r}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="dkmlmc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    run_p = sub.add_parser("run", help="run the experiment described by a config file")
    run_p.add_argument("config", help="YAML or JSON config (or an emitted summary.json)")
    run_p.add_argument("--output-dir", default=None, help="overrides the config output_dir")
    insp = sub.add_parser("inspect", help="print the header and basic stats of a field dump")
    insp.add_argument("field")
    args = parser.parse_args(argv)

    if args.command == "inspect":
        try:
            return _inspect(args.field)
        except Exception as exc:  # noqa: BLE001 - CLI boundary
            print(f"error: {exc}", file=sys.stderr)
            return 3

    try:
        config = load_config_file(args.config)
    except ConfigError as exc:
        print("config error:", file=sys.stderr)
        for v in exc.violations:
            print(f"  - {v}", file=sys.stderr)
        return 2
    except (OSError, yaml.YAMLError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        run(config, output_dir=args.output_dir)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
