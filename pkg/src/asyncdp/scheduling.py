"""Simulation of owner availability.

Each owner carries an independent rate-one Poisson clock; merging the clocks
yields the event sequence that drives training. Because the clocks have equal
rates, the owner communicating at any event is uniform over the owners, so a
uniform i.i.d. selection mode is provided as the logically equivalent
alternative.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .output import write_csv

__all__ = [
    "SchedulerMode",
    "ScheduleEvent",
    "PoissonState",
    "init_poisson_state",
    "next_event",
    "uniform_pick",
    "build_schedule",
    "write_schedule_csv",
]


class SchedulerMode(enum.Enum):
    """How the communicating owner is chosen at each iteration."""

    POISSON_CLOCKS = "poisson"
    UNIFORM_IID = "uniform"

    @classmethod
    def parse(cls, text: str) -> "SchedulerMode":
        for mode in cls:
            if mode.value == text:
                return mode
        choices = ", ".join(m.value for m in cls)
        raise ValueError(f"unknown scheduler mode {text!r}; choose one of: {choices}")


@dataclass(frozen=True, slots=True)
class ScheduleEvent:
    """Event ``k``: owner ``owner`` communicates at simulated time ``t``."""

    k: int
    t: float
    owner: int


@dataclass
class PoissonState:
    """Pending next-tick time of every owner's clock, plus the event counter."""

    next_ticks: np.ndarray
    k: int = 0


def init_poisson_state(n_owners: int, rng: np.random.Generator) -> PoissonState:
    if n_owners < 1:
        raise ValueError("need at least one owner")
    return PoissonState(rng.exponential(size=n_owners))


def next_event(state: PoissonState, rng: np.random.Generator) -> ScheduleEvent:
    """Pop the earliest pending tick; exact ties go to the lowest owner id."""
    idx = int(np.argmin(state.next_ticks))
    t = float(state.next_ticks[idx])
    state.next_ticks[idx] = t + rng.exponential()
    state.k += 1
    return ScheduleEvent(state.k, t, idx + 1)


def uniform_pick(n_owners: int, rng: np.random.Generator) -> int:
    """Uniform draw from {1..n_owners}, i.i.d. across calls."""
    if n_owners < 1:
        raise ValueError("need at least one owner")
    return int(rng.integers(1, n_owners + 1))


def build_schedule(
    mode: SchedulerMode, n_owners: int, horizon: int, rng: np.random.Generator
) -> list[ScheduleEvent]:
    """Exactly ``horizon`` events; uniform mode uses logical times t_k = k."""
    if n_owners < 1:
        raise ValueError("need at least one owner")
    if horizon < 1:
        raise ValueError("horizon must be a positive integer")
    if mode is SchedulerMode.UNIFORM_IID:
        owners = rng.integers(1, n_owners + 1, size=horizon)
        return [
            ScheduleEvent(k + 1, float(k + 1), int(owner))
            for k, owner in enumerate(owners)
        ]
    times, owners = _merged_poisson_arrivals(n_owners, horizon, rng)
    return [
        ScheduleEvent(k + 1, float(t), int(owner))
        for k, (t, owner) in enumerate(zip(times, owners))
    ]


def _merged_poisson_arrivals(
    n_owners: int, horizon: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """First ``horizon`` arrivals of ``n_owners`` merged rate-one processes.

    Ticks are drawn in fixed-size blocks per owner so the draw pattern, and
    hence the schedule, is a deterministic function of the generator state.
    The merge is only valid up to the earliest per-owner last tick, so blocks
    are extended until at least ``horizon`` arrivals fall below that cap.
    """
    per_owner = horizon / n_owners
    block = max(int(per_owner + 4.0 * math.sqrt(per_owner) + 16.0), 16)
    ticks = [np.cumsum(rng.exponential(size=block)) for _ in range(n_owners)]
    while True:
        cap = min(float(t[-1]) for t in ticks)
        merged = sum(int(np.searchsorted(t, cap, side="right")) for t in ticks)
        if merged >= horizon:
            break
        short = min(range(n_owners), key=lambda j: float(ticks[j][-1]))
        extension = ticks[short][-1] + np.cumsum(rng.exponential(size=block))
        ticks[short] = np.concatenate([ticks[short], extension])
    times = np.concatenate(ticks)
    owners = np.concatenate(
        [np.full(t.shape[0], i + 1, dtype=np.int64) for i, t in enumerate(ticks)]
    )
    order = np.lexsort((owners, times))[:horizon]
    return times[order], owners[order]


def write_schedule_csv(events, path) -> None:
    write_csv(path, ["k", "t_k", "owner"], ((e.k, e.t, e.owner) for e in events))
