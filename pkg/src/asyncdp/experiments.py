"""Ensemble experiment pipeline.

A plan describes a grid over (owner count, records per owner, privacy budget)
plus the protocol hyperparameters. Each grid cell generates its synthetic
problem, solves the non-private optimum, executes many independently seeded
runs, and aggregates per-iteration percentile statistics of the relative
fitness. All randomness fans out from the plan's master seed, so a plan
reproduces every output file byte-for-byte.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from . import __version__ as _version
from .bounds import FittedBound, fit_constants, limiting_bound_fitness
from .data import gen_synthetic, gen_two_cluster
from .model import FitnessSpec
from .oracle import FitnessEvaluator, relative_fitness, solo_model, solve_exact
from .output import write_csv, write_manifest
from .scheduling import SchedulerMode, write_schedule_csv
from .seeding import DATA_STREAM, RUN_STREAM, derive_seed
from .trainer import ProtocolConfig, default_step_gain, run

__all__ = [
    "ExperimentPlan",
    "CellResult",
    "run_ensemble",
    "collaboration_report",
    "write_ensemble_outputs",
    "write_collaboration_outputs",
    "write_trajectory_csv",
    "parse_config_text",
    "plan_from_mapping",
]

_IID_DATA = 1
_TWO_CLUSTER_DATA = 2


@dataclass(frozen=True)
class ExperimentPlan:
    """A grid of experiment cells plus the shared protocol hyperparameters.

    The same (owner count, owner size) pair reuses the same synthetic data
    across privacy budgets, mirroring how a fixed dataset would be swept.
    """

    owner_counts: tuple[int, ...]
    owner_sizes: tuple[int, ...]
    epsilons: tuple[float, ...]
    fitness: FitnessSpec
    horizon: int = 1000
    runs_per_cell: int = 100
    dim: int = 10
    noise_std: float = 1.0
    theta_max: float = 1000.0
    step_gain: float | None = None
    step_gain_scale: float = 1.0
    mode: SchedulerMode = SchedulerMode.POISSON_CLOCKS
    seed: int = 0
    snapshot_stride: int = 1
    data_kind: str = "iid"
    solo_owner: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "owner_counts", tuple(int(v) for v in self.owner_counts))
        object.__setattr__(self, "owner_sizes", tuple(int(v) for v in self.owner_sizes))
        object.__setattr__(self, "epsilons", tuple(float(v) for v in self.epsilons))
        if not (self.owner_counts and self.owner_sizes and self.epsilons):
            raise ValueError("the experiment grid must be nonempty")
        if int(self.runs_per_cell) < 1:
            raise ValueError("runs_per_cell must be a positive integer")
        if not float(self.step_gain_scale) > 0:
            raise ValueError("step_gain_scale must be positive")
        if self.data_kind not in ("iid", "two_cluster"):
            raise ValueError("data_kind must be 'iid' or 'two_cluster'")
        if int(self.solo_owner) < 1:
            raise ValueError("solo_owner must be a positive owner index")

    def cells(self) -> Iterator[tuple[int, int, int, float]]:
        """Yield (cell_index, n_owners, owner_size, epsilon) in grid order."""
        index = 0
        for n_owners in self.owner_counts:
            for owner_size in self.owner_sizes:
                for epsilon in self.epsilons:
                    yield index, n_owners, owner_size, epsilon
                    index += 1

    def manifest_entries(self) -> dict[str, object]:
        entries = {
            "tool_version": _version,
            "owner_counts": ",".join(str(v) for v in self.owner_counts),
            "owner_sizes": ",".join(str(v) for v in self.owner_sizes),
            "epsilons": ",".join(repr(v) for v in self.epsilons),
            "horizon": self.horizon,
            "runs_per_cell": self.runs_per_cell,
            "dim": self.dim,
            "noise_std": self.noise_std,
            "reg_coeff": self.fitness.reg_coeff,
            "clip_bound": self.fitness.clip_bound,
            "reg_grad_bound": self.fitness.reg_grad_bound,
            "theta_max": self.theta_max,
            "step_gain": "default" if self.step_gain is None else self.step_gain,
            "step_gain_scale": self.step_gain_scale,
            "mode": self.mode.value,
            "seed": self.seed,
            "snapshot_stride": self.snapshot_stride,
            "data_kind": self.data_kind,
            "solo_owner": self.solo_owner,
            "pca_scores": "raw projections (no variance normalization)",
        }
        for n_owners in self.owner_counts:
            entries[f"resolved_step_gain_N{n_owners}"] = self._resolve_step_gain(n_owners)
        return entries

    def _resolve_step_gain(self, n_owners: int) -> float:
        if self.step_gain is not None:
            return self.step_gain
        return self.step_gain_scale * default_step_gain(self.horizon, n_owners, self.fitness)


@dataclass
class CellResult:
    """Aggregated statistics for one grid cell."""

    n_owners: int
    owner_size: int
    epsilon: float
    n_total: int
    fitness_star: float
    snapshot_ks: np.ndarray
    p25: np.ndarray
    p50: np.ndarray
    p75: np.ndarray
    final_psis: np.ndarray
    mean_final_psi: float
    schedule: list = field(default_factory=list)
    psi_solo: float | None = None

    @property
    def benefit(self) -> bool:
        """Whether collaborating beats the solo owner's non-private model."""
        if self.psi_solo is None:
            raise ValueError("cell was run without a solo baseline")
        return bool(self.mean_final_psi < self.psi_solo)

    @property
    def label(self) -> str:
        return f"N{self.n_owners}_n{self.owner_size}_eps{self.epsilon!r}"


def _run_cell(
    plan: ExperimentPlan,
    cell_index: int,
    n_owners: int,
    owner_size: int,
    epsilon: float,
    want_solo: bool,
) -> CellResult:
    sizes = [owner_size] * n_owners
    if plan.data_kind == "two_cluster":
        # The owner count is left out of the data seed so growing the grid's
        # owner count only adds owners; the solo owner's records stay fixed.
        data_seed = derive_seed(plan.seed, DATA_STREAM, _TWO_CLUSTER_DATA, owner_size)
        datasets = gen_two_cluster(
            plan.dim, sizes, plan.noise_std, data_seed, epsilon, plan.solo_owner
        )
    else:
        data_seed = derive_seed(plan.seed, DATA_STREAM, _IID_DATA, n_owners, owner_size)
        datasets = gen_synthetic(
            plan.dim, sum(sizes), sizes, plan.noise_std, data_seed, epsilon
        )
    solution = solve_exact(datasets, plan.fitness, plan.theta_max)
    evaluator = FitnessEvaluator(datasets, plan.fitness)
    step_gain = plan._resolve_step_gain(n_owners)

    psi_runs = None
    snapshot_ks = None
    schedule = []
    for run_index in range(plan.runs_per_cell):
        config = ProtocolConfig(
            n_owners=n_owners,
            horizon=plan.horizon,
            fitness=plan.fitness,
            step_gain=step_gain,
            theta_max=plan.theta_max,
            mode=plan.mode,
            seed=derive_seed(plan.seed, RUN_STREAM, cell_index, run_index),
            snapshot_stride=plan.snapshot_stride,
        )
        state = run(config, datasets)
        psi = evaluator.fitness_batch(state.trajectory) / solution.fitness_star - 1.0
        if psi_runs is None:
            psi_runs = np.empty((plan.runs_per_cell, psi.shape[0]))
            snapshot_ks = state.trajectory_ks
            schedule = state.event_log
        psi_runs[run_index] = psi

    p25, p50, p75 = np.percentile(psi_runs, [25.0, 50.0, 75.0], axis=0)
    final_psis = psi_runs[:, -1].copy()
    result = CellResult(
        n_owners=n_owners,
        owner_size=owner_size,
        epsilon=epsilon,
        n_total=sum(sizes),
        fitness_star=solution.fitness_star,
        snapshot_ks=snapshot_ks,
        p25=p25,
        p50=p50,
        p75=p75,
        final_psis=final_psis,
        mean_final_psi=float(final_psis.mean()),
        schedule=schedule,
    )
    if want_solo:
        solo = solo_model(datasets[plan.solo_owner - 1], plan.fitness, plan.theta_max)
        result.psi_solo = relative_fitness(solo.params, solution, datasets)
    return result


def run_ensemble(plan: ExperimentPlan) -> list[CellResult]:
    """Execute every cell of the plan's grid."""
    return [
        _run_cell(plan, index, n_owners, owner_size, epsilon, want_solo=False)
        for index, n_owners, owner_size, epsilon in plan.cells()
    ]


def collaboration_report(plan: ExperimentPlan, solo_owner: int | None = None) -> list[CellResult]:
    """Ensemble over heterogeneous data, with the solo-owner baseline per cell.

    The benefit flag of each cell compares the ensemble's mean final relative
    fitness against the relative fitness of the non-private model trained on
    the solo owner's records alone.
    """
    if solo_owner is not None:
        plan = replace(plan, solo_owner=solo_owner)
    if plan.data_kind != "two_cluster":
        plan = replace(plan, data_kind="two_cluster")
    return [
        _run_cell(plan, index, n_owners, owner_size, epsilon, want_solo=True)
        for index, n_owners, owner_size, epsilon in plan.cells()
    ]


def fit_sweep_bound(results: Sequence[CellResult]) -> FittedBound | None:
    """Fit the limiting-bound coefficients over a sweep's cells."""
    if len(results) < 2:
        return None
    sweep = [
        (cell.n_total, (cell.epsilon,) * cell.n_owners, cell.mean_final_psi)
        for cell in results
    ]
    try:
        return fit_constants(sweep)
    except ValueError:
        return None


def write_ensemble_outputs(plan: ExperimentPlan, results: Sequence[CellResult], out_dir) -> None:
    """Write sweep.csv, per-cell percentiles/schedules, and the manifest."""
    out = Path(out_dir)
    fitted = fit_sweep_bound(results)
    sweep_rows = []
    for cell in results:
        bound = (
            limiting_bound_fitness(cell.n_total, (cell.epsilon,) * cell.n_owners, fitted)
            if fitted is not None
            else math.nan
        )
        sweep_rows.append(
            (cell.n_total, cell.epsilon, cell.n_owners, cell.mean_final_psi, bound)
        )
    write_csv(out / "sweep.csv", ["n", "eps", "N", "mean_psi", "bound_psi"], sweep_rows)
    for cell in results:
        cell_dir = out / "cells" / cell.label
        write_csv(
            cell_dir / "percentiles.csv",
            ["k", "p25", "p50", "p75"],
            zip(cell.snapshot_ks, cell.p25, cell.p50, cell.p75),
        )
        write_schedule_csv(cell.schedule, cell_dir / "schedule.csv")
    entries = plan.manifest_entries()
    if fitted is not None:
        entries["fitted_sqrt_coeff"] = fitted.sqrt_coeff
        entries["fitted_linear_coeff"] = fitted.linear_coeff
    write_manifest(out / "manifest.txt", entries)


def write_collaboration_outputs(
    plan: ExperimentPlan, results: Sequence[CellResult], out_dir
) -> None:
    """Write the collaboration-value table and the manifest."""
    out = Path(out_dir)
    write_csv(
        out / "report.csv",
        ["N", "eps", "n_i", "mean_psi", "psi_solo", "benefit"],
        (
            (c.n_owners, c.epsilon, c.owner_size, c.mean_final_psi, c.psi_solo, c.benefit)
            for c in results
        ),
    )
    write_manifest(out / "manifest.txt", plan.manifest_entries())


def write_trajectory_csv(state, psis: np.ndarray, path) -> None:
    """Single-run artifact: one row per iteration with its relative fitness.

    ``psis`` must align with ``state.trajectory`` (snapshot 0 is the initial
    state and has no schedule row, so it is skipped).
    """
    events = {e.k: e for e in state.event_log}
    rows = []
    for k, psi in zip(state.trajectory_ks, psis):
        if k == 0:
            continue
        event = events[int(k)]
        rows.append((event.k, event.t, event.owner, float(psi)))
    write_csv(path, ["k", "t_k", "owner", "psi"], rows)


def parse_config_text(text: str) -> dict[str, str]:
    """Parse declarative ``key = value`` configuration text.

    Blank lines and ``#`` comments (full-line or trailing) are ignored.
    """
    mapping: dict[str, str] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {line_no}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        mapping[key.strip()] = value.strip()
    return mapping


def _parse_list(text: str) -> list[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


def plan_from_mapping(cfg: dict[str, str], **overrides) -> ExperimentPlan:
    """Build an :class:`ExperimentPlan` from parsed key/value text.

    Recognized keys: owner_counts, owner_sizes, epsilons, horizon,
    runs_per_cell, dim, noise_std, reg_coeff, clip_bound, reg_grad_bound,
    theta_max, step_gain, step_gain_scale, mode, seed, snapshot_stride,
    data_kind, solo_owner. Keyword overrides win over file values.
    """
    def pick(key: str, default=None):
        if key in overrides and overrides[key] is not None:
            return overrides[key]
        return cfg.get(key, default)

    fitness = FitnessSpec(
        reg_coeff=float(pick("reg_coeff", 1e-5)),
        clip_bound=float(pick("clip_bound", 20.0)),
        reg_grad_bound=float(pick("reg_grad_bound", 0.1)),
    )
    step_gain_raw = pick("step_gain")
    mode_raw = pick("mode", "poisson")
    mode = mode_raw if isinstance(mode_raw, SchedulerMode) else SchedulerMode.parse(str(mode_raw))
    return ExperimentPlan(
        owner_counts=tuple(int(v) for v in _as_list(pick("owner_counts", "3"))),
        owner_sizes=tuple(int(v) for v in _as_list(pick("owner_sizes", "1000"))),
        epsilons=tuple(float(v) for v in _as_list(pick("epsilons", "1.0"))),
        fitness=fitness,
        horizon=int(pick("horizon", 1000)),
        runs_per_cell=int(pick("runs_per_cell", 100)),
        dim=int(pick("dim", 10)),
        noise_std=float(pick("noise_std", 1.0)),
        theta_max=float(pick("theta_max", 1000.0)),
        step_gain=None if step_gain_raw in (None, "", "default") else float(step_gain_raw),
        step_gain_scale=float(pick("step_gain_scale", 1.0)),
        mode=mode,
        seed=int(pick("seed", 0)),
        snapshot_stride=int(pick("snapshot_stride", 1)),
        data_kind=str(pick("data_kind", "iid")),
        solo_owner=int(pick("solo_owner", 1)),
    )


def _as_list(value) -> list:
    if isinstance(value, (list, tuple)):
        return list(value)
    return _parse_list(str(value))
