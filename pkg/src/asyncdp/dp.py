"""Owner-side answering of gradient queries: exact clipped-gradient queries,
calibrated Laplace noise, and a per-owner budget ledger over a fixed
communication horizon.

A ledger and its noise stream belong to one owner and must be used serially;
distinct owners may respond concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import OwnerDataset, as_vector

__all__ = [
    "BudgetExhaustedError",
    "BudgetLedger",
    "QueryResponse",
    "true_query",
    "laplace_scale",
    "sample_laplace",
    "respond",
]


class BudgetExhaustedError(RuntimeError):
    """Raised when an owner is asked for more responses than the horizon allows."""


@dataclass
class BudgetLedger:
    """Counts responses issued by one owner against the communication horizon.

    The total budget ``epsilon`` is split evenly across the ``horizon``
    possible responses; refusing the (horizon + 1)-th query is what keeps that
    split valid.
    """

    horizon: int
    epsilon: float
    responses_issued: int = 0

    def __post_init__(self) -> None:
        if int(self.horizon) < 1:
            raise ValueError("horizon must be a positive integer")
        if not float(self.epsilon) > 0:
            raise ValueError("epsilon must be positive")
        if not 0 <= self.responses_issued <= self.horizon:
            raise ValueError("responses_issued must lie in 0..horizon")

    @property
    def per_round_epsilon(self) -> float:
        return self.epsilon / self.horizon

    @property
    def exhausted(self) -> bool:
        return self.responses_issued >= self.horizon

    def charge(self) -> None:
        if self.exhausted:
            raise BudgetExhaustedError(
                f"owner already issued {self.responses_issued} responses over "
                f"a horizon of {self.horizon}"
            )
        self.responses_issued += 1


@dataclass(frozen=True)
class QueryResponse:
    """A noisy gradient returned by one owner for one iteration."""

    noisy_grad: np.ndarray
    owner_id: int
    iteration_k: int
    noise_scale_used: float


def true_query(dataset: OwnerDataset, theta, clip_bound: float) -> np.ndarray:
    """Mean of the l1-clipped per-record loss gradients at ``theta``.

    The result always has l1 norm at most ``clip_bound``, and replacing one
    record moves it by at most ``2 * clip_bound / n_records`` in l1.
    """
    t = as_vector(theta)
    if dataset.dim != t.shape[0]:
        raise ValueError("dataset feature dimension does not match parameters")
    if not float(clip_bound) > 0:
        raise ValueError("clip_bound must be positive")
    residuals = dataset.targets - dataset.features @ t
    # Record i's gradient is -2 r_i x_i, so its l1 norm is 2 |r_i| |x_i|_1 and
    # clipping reduces to scaling the residual coefficient.
    norms = 2.0 * np.abs(residuals) * dataset.feature_l1_norms
    coeffs = -2.0 * residuals
    over = norms > clip_bound
    if np.any(over):
        scales = np.ones_like(norms)
        np.divide(clip_bound, norms, out=scales, where=over)
        coeffs *= scales
    return (coeffs @ dataset.features) / dataset.n_records


def laplace_scale(clip_bound: float, horizon: int, n_records: int, epsilon: float) -> float:
    """Per-coordinate Laplace scale for a full horizon of private responses.

    Evaluates 2 * clip_bound * horizon / (n_records * epsilon) exactly, the
    per-round sensitivity of :func:`true_query` divided by the per-round
    budget. An infinite ``epsilon`` yields scale 0.0 (noise disabled).
    """
    if not float(clip_bound) > 0:
        raise ValueError("clip_bound must be positive")
    if int(horizon) < 1:
        raise ValueError("horizon must be a positive integer")
    if int(n_records) < 1:
        raise ValueError("n_records must be a positive integer")
    if not float(epsilon) > 0:
        raise ValueError("epsilon must be positive")
    return 2.0 * clip_bound * horizon / (n_records * epsilon)


def sample_laplace(scale: float, rng: np.random.Generator, dim: int) -> np.ndarray:
    """``dim`` i.i.d. Laplace(0, scale) draws via the inverse CDF.

    u ~ Uniform(-1/2, 1/2) maps to w = -scale * sign(u) * ln(1 - 2|u|), so
    u = 0 maps to exactly 0 and the draw is deterministic given the generator
    state.
    """
    if not float(scale) > 0:
        raise ValueError("scale must be positive")
    u = rng.uniform(-0.5, 0.5, size=dim)
    return -scale * np.sign(u) * np.log1p(-2.0 * np.abs(u))


def respond(
    dataset: OwnerDataset,
    theta,
    k: int,
    ledger: BudgetLedger,
    rng: np.random.Generator,
    clip_bound: float,
) -> QueryResponse:
    """Answer iteration ``k``'s gradient query, charging the owner's ledger.

    Raises :class:`BudgetExhaustedError` once ``ledger.horizon`` responses have
    been issued. With an infinite budget the response equals the exact query.
    """
    if ledger.exhausted:
        raise BudgetExhaustedError(
            f"owner {dataset.owner_id} has exhausted its {ledger.horizon}-response horizon"
        )
    if not 1 <= int(k) <= ledger.horizon:
        raise ValueError("iteration index must lie in 1..horizon")
    exact = true_query(dataset, theta, clip_bound)
    scale = laplace_scale(clip_bound, ledger.horizon, dataset.n_records, dataset.epsilon)
    if scale > 0.0:
        noisy = exact + sample_laplace(scale, rng, exact.shape[0])
    else:
        noisy = exact
    ledger.charge()
    return QueryResponse(noisy, dataset.owner_id, int(k), scale)
