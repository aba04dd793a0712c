"""The central learner's training loop.

The learner keeps one central parameter vector plus a tracking copy per owner.
At each event it averages the central vector with the communicating owner's
copy, queries that owner for a noisy gradient at the midpoint, then applies a
small constant-rate descent step to the copy and a regularizer-only inertia
step to the central vector. One run is strictly sequential; independent runs
are pure functions of their configs and can be executed in parallel.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dp import BudgetLedger, QueryResponse, respond
from .model import FitnessSpec, ModelParams, OwnerDataset, as_vector, project, reg_grad
from .scheduling import ScheduleEvent, SchedulerMode, build_schedule
from .seeding import OWNER_STREAM, SCHEDULE_STREAM, derive_rng

__all__ = [
    "ProtocolConfig",
    "TrainerState",
    "default_step_gain",
    "init_state",
    "theta_bar",
    "local_update",
    "central_update",
    "run",
]


def default_step_gain(horizon: int, n_owners: int, fitness: FitnessSpec) -> float:
    """Step gain whose first-step magnitude is a tenth of the gradient bound.

    The per-iteration step coefficient works out to
    n_owners * step_gain / (horizon**2 * strong_convexity); this default makes
    that coefficient 1 / (10 * (clip_bound + reg_grad_bound)).
    """
    return (horizon**2) * fitness.strong_convexity / (
        10.0 * n_owners * (fitness.clip_bound + fitness.reg_grad_bound)
    )


@dataclass(frozen=True)
class ProtocolConfig:
    """Everything needed to reproduce one training run exactly.

    ``step_gain`` left as None resolves to :func:`default_step_gain` at
    construction, so the value actually used is always available for logging.
    ``snapshot_stride`` bounds trajectory memory at large horizons; the final
    iterate is always snapshotted. ``track_copies`` additionally records every
    owner copy at each snapshot (debugging only).
    """

    n_owners: int
    horizon: int
    fitness: FitnessSpec
    step_gain: float | None = None
    theta_max: float = 1000.0
    mode: SchedulerMode = SchedulerMode.POISSON_CLOCKS
    seed: int = 0
    snapshot_stride: int = 1
    track_copies: bool = False

    def __post_init__(self) -> None:
        if int(self.n_owners) < 1:
            raise ValueError("n_owners must be a positive integer")
        if int(self.horizon) < 1:
            raise ValueError("horizon must be a positive integer")
        if not self.fitness.strong_convexity > 0:
            raise ValueError("updates require reg_coeff > 0 (strongly convex regularizer)")
        if not float(self.theta_max) > 0:
            raise ValueError("theta_max must be positive")
        if int(self.snapshot_stride) < 1:
            raise ValueError("snapshot_stride must be a positive integer")
        if self.step_gain is None:
            object.__setattr__(
                self,
                "step_gain",
                default_step_gain(self.horizon, self.n_owners, self.fitness),
            )
        if not float(self.step_gain) > 0:
            raise ValueError("step_gain must be positive")

    @property
    def local_step(self) -> float:
        """Coefficient applied to the owner-side descent direction."""
        return (
            self.n_owners
            * self.step_gain
            / (self.horizon**2 * self.fitness.strong_convexity)
        )

    @property
    def central_step(self) -> float:
        """Coefficient applied to the regularizer gradient in the central update."""
        return (
            (self.n_owners - 1)
            * self.step_gain
            / (self.n_owners * self.horizon**2 * self.fitness.strong_convexity)
        )


@dataclass
class TrainerState:
    """Central parameters, the per-owner copies, and the run's event history.

    ``trajectory`` holds central-parameter snapshots (row 0 is the all-zero
    initial state) and ``trajectory_ks`` the iteration index of each row.
    """

    central: ModelParams
    copies: list[ModelParams]
    k: int = 0
    event_log: list[ScheduleEvent] = field(default_factory=list)
    trajectory: np.ndarray | None = None
    trajectory_ks: np.ndarray | None = None
    copy_trajectory: np.ndarray | None = None


def init_state(config: ProtocolConfig, dim: int) -> TrainerState:
    """All parameter vectors start at the origin, which is always feasible."""
    zero = project(np.zeros(dim), config.theta_max)
    return TrainerState(central=zero, copies=[zero] * config.n_owners)


def theta_bar(state: TrainerState, owner: int) -> np.ndarray:
    """Midpoint of the central parameters and the owner's tracking copy."""
    return 0.5 * (state.central.theta + state.copies[owner - 1].theta)


def local_update(
    theta_bar_vec,
    response: QueryResponse,
    config: ProtocolConfig,
    n_total: int,
    n_owner: int,
) -> ModelParams:
    """Descend the owner-side direction from the midpoint and re-project.

    The direction mixes the owner's (record-share weighted) noisy gradient
    with a 1/(2 n_owners) share of the regularizer gradient.
    """
    tb = as_vector(theta_bar_vec)
    direction = reg_grad(tb, config.fitness.reg_coeff) / (2.0 * config.n_owners) + (
        n_owner / n_total
    ) * response.noisy_grad
    return project(tb - config.local_step * direction, config.theta_max)


def central_update(theta_bar_vec, config: ProtocolConfig) -> ModelParams:
    """Inertia step for the central parameters (regularizer gradient only).

    With a single owner the coefficient is zero and the midpoint passes
    through unchanged.
    """
    tb = as_vector(theta_bar_vec)
    step = config.central_step * reg_grad(tb, config.fitness.reg_coeff)
    return project(tb - step, config.theta_max)


def run(config: ProtocolConfig, datasets: Sequence[OwnerDataset]) -> TrainerState:
    """Execute the full horizon of schedule/query/update iterations.

    Deterministic given ``config.seed``: the schedule and each owner's noise
    come from independent substreams derived from it. Budget exhaustion and
    configuration errors propagate unchanged.
    """
    if len(datasets) != config.n_owners:
        raise ValueError(
            f"config expects {config.n_owners} owners, got {len(datasets)} datasets"
        )
    for position, dataset in enumerate(datasets, start=1):
        if dataset.owner_id != position:
            raise ValueError("datasets must be ordered with owner_id = 1..n_owners")
    dims = {d.dim for d in datasets}
    if len(dims) != 1:
        raise ValueError("all owners must share one feature dimension")
    dim = dims.pop()
    n_total = sum(d.n_records for d in datasets)

    schedule = build_schedule(
        config.mode, config.n_owners, config.horizon, derive_rng(config.seed, SCHEDULE_STREAM)
    )
    owner_rngs = [derive_rng(config.seed, OWNER_STREAM, d.owner_id) for d in datasets]
    ledgers = [BudgetLedger(config.horizon, d.epsilon) for d in datasets]

    state = init_state(config, dim)
    snapshots = [state.central.theta.copy()]
    snapshot_ks = [0]
    copy_snaps = (
        [np.array([c.theta for c in state.copies])] if config.track_copies else None
    )

    for event in schedule:
        idx = event.owner - 1
        midpoint = theta_bar(state, event.owner)
        response = respond(
            datasets[idx], midpoint, event.k, ledgers[idx], owner_rngs[idx],
            config.fitness.clip_bound,
        )
        state.copies[idx] = local_update(
            midpoint, response, config, n_total, datasets[idx].n_records
        )
        state.central = central_update(midpoint, config)
        state.k = event.k
        state.event_log.append(event)
        if event.k % config.snapshot_stride == 0 or event.k == config.horizon:
            snapshots.append(state.central.theta.copy())
            snapshot_ks.append(event.k)
            if copy_snaps is not None:
                copy_snaps.append(np.array([c.theta for c in state.copies]))

    state.trajectory = np.asarray(snapshots)
    state.trajectory_ks = np.asarray(snapshot_ks, dtype=np.int64)
    if copy_snaps is not None:
        state.copy_trajectory = np.asarray(copy_snaps)
    return state
