"""Closed-form performance guarantees for the asynchronous private trainer.

Evaluates the finite-horizon upper bound on the expected squared parameter
distance, the large-horizon limiting bound on the expected fitness gap, and a
one-sided nonnegative least-squares fit of the limiting bound's two empirical
coefficients to measured sweeps. The contraction parameter of the hub-and-
spokes averaging step is computed from its expected mixing matrix by power
iteration. All functions are pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.optimize

from .model import OwnerDataset, fitness
from .oracle import ConvergenceError, OracleSolution
from .trainer import ProtocolConfig

__all__ = [
    "BoundParams",
    "FittedBound",
    "expected_gossip_matrix",
    "lambda_for_uniform_gossip",
    "bound_parameter_distance",
    "limiting_bound_fitness",
    "fit_constants",
    "cost_of_privacy",
]

_SQRT2 = math.sqrt(2.0)


def expected_gossip_matrix(n_owners: int) -> np.ndarray:
    """Expected mixing matrix of the one-on-one averaging step.

    Nodes 1..N are owners and node N+1 is the learner; each event averages the
    learner with one owner chosen uniformly, i.e. applies
    I - (e_i - e_{N+1})(e_i - e_{N+1})^T / 2 for a uniform random i. The
    expectation over i is what contracts disagreement between the nodes.
    """
    if n_owners < 1:
        raise ValueError("need at least one owner")
    size = n_owners + 1
    mixing = np.eye(size)
    for i in range(n_owners):
        edge = np.zeros(size)
        edge[i] = 1.0
        edge[-1] = -1.0
        mixing -= np.outer(edge, edge) / (2.0 * n_owners)
    return mixing


def _power_iteration_sq_norm(
    matrix: np.ndarray, tol: float, max_iter: int, seed: int = 0xA5
) -> float:
    """Squared spectral norm of ``matrix`` via power iteration on M^T M."""
    square = matrix.T @ matrix
    rng = np.random.default_rng(seed)
    vec = rng.standard_normal(square.shape[0])
    vec /= np.linalg.norm(vec)
    estimate = math.inf
    for _ in range(max_iter):
        prod = square @ vec
        norm = float(np.linalg.norm(prod))
        if norm <= 1e-300:
            return 0.0
        vec = prod / norm
        current = float(vec @ (square @ vec))
        if abs(current - estimate) <= tol:
            return current
        estimate = current
    raise ConvergenceError("power iteration did not converge", abs(current - estimate))


def lambda_for_uniform_gossip(
    n_owners: int, tol: float = 1e-10, max_iter: int = 200_000
) -> float:
    """Squared spectral norm of the deflated expected mixing matrix.

    Deflation removes the all-ones consensus direction; the remainder's
    squared spectral norm is the per-event contraction factor and is strictly
    below one for every owner count (it is asserted here). One owner mixes
    perfectly, giving exactly zero.
    """
    mixing = expected_gossip_matrix(n_owners)
    size = n_owners + 1
    deflated = mixing - (np.ones((size, size)) @ mixing) / size
    value = _power_iteration_sq_norm(deflated, tol, max_iter)
    if not value < 1.0:
        raise ArithmeticError(
            f"contraction parameter {value} is not below 1 for n_owners={n_owners}"
        )
    return value


@dataclass(frozen=True)
class BoundParams:
    """Constants entering the finite-horizon parameter-distance bound.

    ``contraction`` is the value from :func:`lambda_for_uniform_gossip`;
    ``strong_convexity`` the regularizer curvature; ``clip_bound`` and
    ``reg_grad_bound`` the gradient ceilings of the loss and regularizer.
    """

    n_owners: int
    horizon: int
    n_total: int
    epsilons: tuple[float, ...]
    strong_convexity: float
    clip_bound: float
    reg_grad_bound: float
    step_gain: float
    contraction: float

    def __post_init__(self) -> None:
        if int(self.n_owners) < 1 or len(self.epsilons) != self.n_owners:
            raise ValueError("need one epsilon per owner")
        if int(self.horizon) < 1 or int(self.n_total) < 1:
            raise ValueError("horizon and n_total must be positive integers")
        if any(not e > 0 for e in self.epsilons):
            raise ValueError("privacy budgets must be positive")
        if not self.strong_convexity > 0:
            raise ValueError("strong_convexity must be positive")
        if not (self.clip_bound > 0 and self.reg_grad_bound > 0):
            raise ValueError("gradient bounds must be positive")
        if not self.step_gain > 0:
            raise ValueError("step_gain must be positive")
        if not 0.0 <= self.contraction < 1.0:
            raise ValueError("contraction must lie in [0, 1)")
        object.__setattr__(self, "epsilons", tuple(float(e) for e in self.epsilons))

    @classmethod
    def from_run(
        cls,
        config: ProtocolConfig,
        datasets: Sequence[OwnerDataset],
        contraction: float | None = None,
    ) -> "BoundParams":
        if contraction is None:
            contraction = lambda_for_uniform_gossip(config.n_owners)
        return cls(
            n_owners=config.n_owners,
            horizon=config.horizon,
            n_total=sum(d.n_records for d in datasets),
            epsilons=tuple(d.epsilon for d in datasets),
            strong_convexity=config.fitness.strong_convexity,
            clip_bound=config.fitness.clip_bound,
            reg_grad_bound=config.fitness.reg_grad_bound,
            step_gain=config.step_gain,
            contraction=contraction,
        )

    @property
    def grad_bound(self) -> float:
        """Combined gradient ceiling: clip_bound + reg_grad_bound."""
        return self.reg_grad_bound + self.clip_bound

    @property
    def step_scale(self) -> float:
        """The per-iteration step parameter step_gain / horizon^2."""
        return self.step_gain / self.horizon**2

    @property
    def noise_deviations(self) -> tuple[float, ...]:
        """Per-owner RMS level of the record-share weighted response noise."""
        return tuple(
            2.0 * _SQRT2 * self.clip_bound * self.horizon / (self.n_total * eps)
            for eps in self.epsilons
        )

    @property
    def sqrt_coeff(self) -> float:
        """Coefficient of the square-root term of the distance bound."""
        return self.n_owners * self.grad_bound**2 / self.strong_convexity**2

    @property
    def linear_coeff(self) -> float:
        """Coefficient of the linear term of the distance bound."""
        return (
            2.0
            * self.n_owners**2
            * self.grad_bound**2
            * math.sqrt(self.n_owners + 1.0)
            / (self.strong_convexity**2 * (1.0 - math.sqrt(self.contraction)))
        )


def bound_parameter_distance(params: BoundParams) -> float:
    """Finite-horizon upper bound on the expected squared parameter distance.

    Monotone nonincreasing in the horizon, the total record count, and each
    privacy budget; vanishes as all of them grow without bound.
    """
    horizon = params.horizon
    inner = sum(
        (1.0 / horizon + 2.0 * _SQRT2 / (params.n_total * eps)) ** 2
        for eps in params.epsilons
    )
    combined = 1.0 / horizon**2 + params.n_owners * inner
    return params.sqrt_coeff * math.sqrt(combined) + params.linear_coeff * combined


@dataclass(frozen=True)
class FittedBound:
    """Empirical coefficients of the large-horizon fitness-gap bound."""

    sqrt_coeff: float
    linear_coeff: float

    def __post_init__(self) -> None:
        if self.sqrt_coeff < 0 or self.linear_coeff < 0:
            raise ValueError("fitted coefficients must be nonnegative")


def limiting_bound_fitness(
    n_total: int, epsilons: Sequence[float], fitted: FittedBound
) -> float:
    """Large-horizon fitness-gap bound at total size ``n_total`` and the given
    per-owner budgets.

    Evaluates sqrt_coeff / n * sqrt(sum 1/eps^2) + linear_coeff / n^2 * sum
    1/eps^2, so with equal budgets the second term scales as 1/eps^2.
    """
    if int(n_total) < 1:
        raise ValueError("n_total must be a positive integer")
    if not epsilons or any(not e > 0 for e in epsilons):
        raise ValueError("privacy budgets must be positive")
    budget_sum = sum(1.0 / (eps * eps) for eps in epsilons)
    return (
        fitted.sqrt_coeff / n_total * math.sqrt(budget_sum)
        + fitted.linear_coeff / (n_total * n_total) * budget_sum
    )


def fit_constants(
    sweep: Sequence[tuple[int, Sequence[float], float]]
) -> FittedBound:
    """One-sided nonnegative least-squares fit of the limiting bound.

    ``sweep`` holds (n_total, epsilons, measured mean relative fitness)
    triples. The two basis functions are (1/n) sqrt(sum 1/eps^2) and
    (1/n^2) sum 1/eps^2. After the NNLS fit, the coefficients are inflated by
    the worst measured/fitted ratio over undershot points so the fitted curve
    majorizes every sweep point.
    """
    if len(sweep) < 2:
        raise ValueError("fit_constants needs at least two sweep points")
    rows = []
    measured = []
    for n_total, epsilons, value in sweep:
        if int(n_total) < 1:
            raise ValueError("n_total must be a positive integer")
        if not epsilons or any(not e > 0 for e in epsilons):
            raise ValueError("privacy budgets must be positive")
        if value < 0:
            raise ValueError("measured relative fitness cannot be negative")
        budget_sum = sum(1.0 / (eps * eps) for eps in epsilons)
        rows.append(
            (math.sqrt(budget_sum) / n_total, budget_sum / (n_total * n_total))
        )
        measured.append(float(value))
    basis = np.asarray(rows, dtype=float)
    targets = np.asarray(measured, dtype=float)
    if np.all(basis == basis[0]):
        raise ValueError("degenerate sweep: identical basis values at every point")
    coeffs, _ = scipy.optimize.nnls(basis, targets)
    fit = basis @ coeffs
    undershot = targets > fit
    if np.any(undershot):
        if np.any(fit[undershot] <= 0.0):
            raise ArithmeticError("cannot inflate a zero fit over positive measurements")
        coeffs = coeffs * float(np.max(targets[undershot] / fit[undershot]))
    return FittedBound(float(coeffs[0]), float(coeffs[1]))


def cost_of_privacy(
    theta, solution: OracleSolution, datasets: Sequence[OwnerDataset]
) -> float:
    """Fitness gap between a (privately) trained model and the non-private
    optimum: fitness(theta) - fitness_star.

    Nonnegative up to round-off whenever the solution is a true optimum, and
    equal to fitness_star times the relative fitness of ``theta``.
    """
    return fitness(theta, datasets, solution.fitness_spec) - solution.fitness_star
