"""Non-private reference solutions and the relative-fitness metric.

The exact solver handles the unconstrained regularized least-squares optimum
through the normal equations; a projected-gradient fallback covers the case
where the box constraint is active. Solo per-owner baselines reuse the same
machinery on a single dataset. All functions are pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg

from .model import FitnessSpec, ModelParams, OwnerDataset, as_vector, fitness

__all__ = [
    "ConvergenceError",
    "OracleSolution",
    "FitnessEvaluator",
    "solve_exact",
    "solve_iterative",
    "solo_model",
    "relative_fitness",
]


class ConvergenceError(RuntimeError):
    """Iterative solve failed; ``residual`` carries the last progress measure."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (last residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class OracleSolution:
    """An optimum of the fitness over the box, with solver diagnostics.

    ``residual`` is solver specific: the gradient norm at the solution for the
    exact solver, the final sup-norm step for the iterative one.
    """

    params: ModelParams
    fitness_star: float
    residual: float
    fitness_spec: FitnessSpec


class FitnessEvaluator:
    """Fitness of many parameter vectors over a fixed dataset collection.

    Precomputes the Gram matrix, the feature/target cross moment, and the
    target energy once, after which each evaluation costs O(dim^2) instead of
    a pass over the records. Agrees with :func:`asyncdp.model.fitness` up to
    floating-point round-off.
    """

    def __init__(self, datasets: Sequence[OwnerDataset], spec: FitnessSpec):
        if not datasets:
            raise ValueError("at least one dataset is required")
        self.spec = spec
        dim = datasets[0].dim
        self.gram = np.zeros((dim, dim))
        self.moment = np.zeros(dim)
        self.target_sq = 0.0
        self.n_total = 0
        for dataset in datasets:
            if dataset.dim != dim:
                raise ValueError("all owners must share one feature dimension")
            self.gram += dataset.features.T @ dataset.features
            self.moment += dataset.features.T @ dataset.targets
            self.target_sq += float(dataset.targets @ dataset.targets)
            self.n_total += dataset.n_records

    @property
    def dim(self) -> int:
        return self.moment.shape[0]

    def fitness_batch(self, thetas: np.ndarray) -> np.ndarray:
        """Fitness of each row of an (m, dim) matrix of parameter vectors."""
        T = np.atleast_2d(np.asarray(thetas, dtype=float))
        quad = np.einsum("ij,jk,ik->i", T, self.gram, T)
        mean_sq_err = (self.target_sq - 2.0 * (T @ self.moment) + quad) / self.n_total
        return self.spec.reg_coeff * np.einsum("ij,ij->i", T, T) + mean_sq_err

    def fitness_one(self, theta) -> float:
        return float(self.fitness_batch(as_vector(theta))[0])

    def grad(self, theta) -> np.ndarray:
        """Gradient of the fitness (regularizer plus mean squared error)."""
        t = as_vector(theta)
        return 2.0 * self.spec.reg_coeff * t + (2.0 / self.n_total) * (
            self.gram @ t - self.moment
        )


def solve_exact(
    datasets: Sequence[OwnerDataset],
    spec: FitnessSpec,
    theta_max: float = math.inf,
) -> OracleSolution:
    """Solve the regularized normal equations by a dense SPD solve.

    Requires a positive ``reg_coeff`` (which makes the system positive
    definite and the optimum unique). Falls back to :func:`solve_iterative`
    when the unconstrained optimum violates the box.
    """
    if not datasets:
        raise ValueError("at least one dataset is required")
    if not spec.reg_coeff > 0:
        raise ValueError("solve_exact requires reg_coeff > 0 for a unique optimum")
    evaluator = FitnessEvaluator(datasets, spec)
    system = evaluator.gram + spec.reg_coeff * evaluator.n_total * np.eye(evaluator.dim)
    theta = scipy.linalg.solve(system, evaluator.moment, assume_a="pos")
    if float(np.max(np.abs(theta))) > theta_max:
        return solve_iterative(datasets, spec, theta_max)
    residual = float(np.linalg.norm(evaluator.grad(theta)))
    return OracleSolution(
        ModelParams(theta, float(theta_max)),
        fitness(theta, datasets, spec),
        residual,
        spec,
    )


def solve_iterative(
    datasets: Sequence[OwnerDataset],
    spec: FitnessSpec,
    theta_max: float,
    tol: float = 1e-10,
    max_iter: int = 10**6,
) -> OracleSolution:
    """Projected gradient descent with a backtracking line search.

    Every accepted step decreases the fitness; iteration stops once the step
    falls below ``tol`` in the sup norm. Failing to converge within
    ``max_iter`` iterations raises :class:`ConvergenceError`.
    """
    if not spec.reg_coeff > 0:
        raise ValueError("solve_iterative requires reg_coeff > 0")
    bound = float(theta_max)
    if math.isnan(bound) or bound < 0:
        raise ValueError("theta_max must be nonnegative")
    evaluator = FitnessEvaluator(datasets, spec)

    def finish(theta: np.ndarray, residual: float) -> OracleSolution:
        return OracleSolution(
            ModelParams(theta, bound), fitness(theta, datasets, spec), residual, spec
        )

    theta = np.clip(np.zeros(evaluator.dim), -bound, bound)
    value = evaluator.fitness_one(theta)
    step = 1.0
    delta = math.inf
    for _ in range(max_iter):
        grad = evaluator.grad(theta)
        while True:
            candidate = np.clip(theta - step * grad, -bound, bound)
            move = theta - candidate
            if not move.any():
                # Step underflowed against the iterate: first-order stationary.
                return finish(theta, 0.0)
            cand_value = evaluator.fitness_one(candidate)
            if cand_value <= value - 1e-4 * float(grad @ move):
                break
            step *= 0.5
        delta = float(np.max(np.abs(move)))
        theta, value = candidate, cand_value
        step *= 2.0
        if delta <= tol:
            return finish(theta, delta)
    raise ConvergenceError(f"no convergence within {max_iter} iterations", delta)


def solo_model(
    dataset: OwnerDataset, spec: FitnessSpec, theta_max: float = math.inf
) -> OracleSolution:
    """Non-private optimum trained on a single owner's records only."""
    return solve_exact([dataset], spec, theta_max)


def relative_fitness(theta, solution: OracleSolution, datasets: Sequence[OwnerDataset]) -> float:
    """fitness(theta) / fitness_star - 1.

    Zero at the optimum and nonnegative everywhere when ``solution`` is a true
    optimum of the same problem. Undefined (rejected) when the optimal fitness
    is zero, which a positive ``reg_coeff`` rules out for nonzero data.
    """
    if not solution.fitness_star > 0:
        raise ValueError("relative fitness is undefined when the optimal fitness is zero")
    return fitness(theta, datasets, solution.fitness_spec) / solution.fitness_star - 1.0
