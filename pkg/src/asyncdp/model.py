"""Linear model, squared-error loss, quadratic regularizer, fitness, and the
box projection onto the feasible parameter set.

Every function here is a pure function of its inputs and safe to call from any
number of concurrent contexts. Arrays are float64 throughout.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

__all__ = [
    "Record",
    "OwnerDataset",
    "ModelParams",
    "FitnessSpec",
    "as_vector",
    "predict",
    "record_loss",
    "record_grad",
    "clip_grad",
    "reg_value",
    "reg_grad",
    "fitness",
    "project",
]


def as_vector(theta) -> np.ndarray:
    """Coerce a ModelParams or array-like into a 1-D float64 vector."""
    if isinstance(theta, ModelParams):
        return theta.theta
    vec = np.asarray(theta, dtype=float)
    if vec.ndim != 1:
        raise ValueError(f"expected a 1-D parameter vector, got shape {vec.shape}")
    return vec


@dataclass(frozen=True)
class Record:
    """A single training example: one feature vector and a scalar target."""

    features: np.ndarray
    target: float

    def __post_init__(self) -> None:
        features = np.asarray(self.features, dtype=float)
        if features.ndim != 1:
            raise ValueError("record features must form a 1-D vector")
        target = float(self.target)
        if not (np.all(np.isfinite(features)) and math.isfinite(target)):
            raise ValueError("record entries must be finite")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "target", target)


@dataclass(frozen=True)
class OwnerDataset:
    """One owner's private records plus the owner's total privacy budget.

    ``features`` is an (n_records, dim) matrix and ``targets`` the matching
    vector of scalar outputs. ``epsilon`` may be ``math.inf``, which disables
    query noise entirely and is how non-private baseline runs are configured.
    """

    owner_id: int
    features: np.ndarray
    targets: np.ndarray
    epsilon: float

    def __post_init__(self) -> None:
        features = np.asarray(self.features, dtype=float)
        targets = np.asarray(self.targets, dtype=float)
        if features.ndim != 2:
            raise ValueError("features must be an (n_records, dim) matrix")
        if targets.shape != (features.shape[0],):
            raise ValueError("targets must hold one scalar per record")
        if features.shape[0] < 1:
            raise ValueError("a dataset needs at least one record")
        if not (np.all(np.isfinite(features)) and np.all(np.isfinite(targets))):
            raise ValueError("dataset entries must be finite")
        if int(self.owner_id) < 1:
            raise ValueError("owner_id must be a positive integer")
        if not float(self.epsilon) > 0:
            raise ValueError("privacy budget epsilon must be positive")
        object.__setattr__(self, "owner_id", int(self.owner_id))
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "epsilon", float(self.epsilon))

    @property
    def n_records(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def records(self) -> list[Record]:
        return [Record(x, y) for x, y in zip(self.features, self.targets)]

    @cached_property
    def feature_l1_norms(self) -> np.ndarray:
        """l1 norm of each record's feature vector (cached; rows are immutable)."""
        return np.abs(self.features).sum(axis=1)

    @classmethod
    def from_records(
        cls, owner_id: int, records: Sequence[Record], epsilon: float
    ) -> "OwnerDataset":
        features = np.array([r.features for r in records], dtype=float)
        targets = np.array([r.target for r in records], dtype=float)
        return cls(owner_id, features, targets, epsilon)

    def with_epsilon(self, epsilon: float) -> "OwnerDataset":
        return dataclasses.replace(self, epsilon=epsilon)


@dataclass(frozen=True)
class ModelParams:
    """A parameter vector together with the box radius it must respect.

    Instances are feasible by construction: use :func:`project` to build one
    from an arbitrary vector.
    """

    theta: np.ndarray
    theta_max: float

    def __post_init__(self) -> None:
        theta = np.asarray(self.theta, dtype=float)
        if theta.ndim != 1:
            raise ValueError("theta must be a 1-D vector")
        theta_max = float(self.theta_max)
        if math.isnan(theta_max) or theta_max < 0:
            raise ValueError("theta_max must be nonnegative")
        if theta.size and float(np.max(np.abs(theta))) > theta_max:
            raise ValueError("theta violates the box constraint; project it first")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "theta_max", theta_max)

    @property
    def dim(self) -> int:
        return self.theta.shape[0]


@dataclass(frozen=True)
class FitnessSpec:
    """Hyperparameters of the training objective.

    ``reg_coeff`` scales the quadratic regularizer ``reg_coeff * theta @ theta``.
    ``clip_bound`` is the l1 ceiling enforced on every per-record loss gradient
    before owners aggregate them, so the advertised query sensitivity holds by
    construction. ``reg_grad_bound`` is the matching ceiling assumed for the
    regularizer gradient; it enters step-size defaults and the theoretical
    constants but nothing is clipped with it.
    """

    reg_coeff: float
    clip_bound: float
    reg_grad_bound: float

    def __post_init__(self) -> None:
        if not float(self.reg_coeff) >= 0:
            raise ValueError("reg_coeff must be nonnegative")
        if not float(self.clip_bound) > 0:
            raise ValueError("clip_bound must be positive")
        if not float(self.reg_grad_bound) > 0:
            raise ValueError("reg_grad_bound must be positive")

    @property
    def strong_convexity(self) -> float:
        """Curvature of the regularizer (its Hessian is 2 * reg_coeff * I)."""
        return 2.0 * self.reg_coeff


def predict(theta, x) -> float:
    """Linear prediction: the inner product of parameters and features."""
    t = as_vector(theta)
    features = np.asarray(x, dtype=float)
    if features.shape != t.shape:
        raise ValueError(
            f"feature shape {features.shape} does not match parameter shape {t.shape}"
        )
    return float(t @ features)


def record_loss(theta, record: Record) -> float:
    """Squared error of the prediction on one record."""
    residual = record.target - predict(theta, record.features)
    return residual * residual


def record_grad(theta, record: Record) -> np.ndarray:
    """Gradient of :func:`record_loss` in the parameters: -2 (y - theta@x) x."""
    t = as_vector(theta)
    if record.features.shape != t.shape:
        raise ValueError("record feature dimension does not match parameters")
    residual = record.target - float(t @ record.features)
    return -2.0 * residual * record.features


def clip_grad(grad, clip_bound: float) -> np.ndarray:
    """Scale ``grad`` down so its l1 norm never exceeds ``clip_bound``.

    Direction is preserved; vectors already inside the ball pass unchanged.
    """
    if not float(clip_bound) > 0:
        raise ValueError("clip_bound must be positive")
    g = np.asarray(grad, dtype=float)
    norm = float(np.abs(g).sum())
    if norm <= clip_bound:
        return g.copy()
    return g * (clip_bound / norm)


def reg_value(theta, reg_coeff: float) -> float:
    """Quadratic regularizer reg_coeff * theta @ theta."""
    t = as_vector(theta)
    return reg_coeff * float(t @ t)


def reg_grad(theta, reg_coeff: float) -> np.ndarray:
    """Gradient of the quadratic regularizer: 2 * reg_coeff * theta."""
    return 2.0 * reg_coeff * as_vector(theta)


def fitness(theta, datasets: Sequence[OwnerDataset], spec: FitnessSpec) -> float:
    """Regularizer plus the mean squared error over the union of all records.

    Depends only on the multiset union of the records, not on how they are
    split between owners.
    """
    t = as_vector(theta)
    n_total = sum(d.n_records for d in datasets)
    if n_total == 0:
        raise ValueError("fitness needs at least one record")
    total = 0.0
    for dataset in datasets:
        if dataset.dim != t.shape[0]:
            raise ValueError("dataset feature dimension does not match parameters")
        residuals = dataset.targets - dataset.features @ t
        total += float(residuals @ residuals)
    return reg_value(t, spec.reg_coeff) + total / n_total


def project(theta, theta_max: float) -> ModelParams:
    """Coordinate-wise clamp onto the box of radius ``theta_max``.

    Idempotent, the identity on feasible points, and non-expansive in the
    sup norm. ``theta_max = 0`` is the degenerate box containing only the
    origin.
    """
    bound = float(theta_max)
    if math.isnan(bound) or bound < 0:
        raise ValueError("theta_max must be nonnegative")
    clipped = np.clip(as_vector(theta), -bound, bound)
    return ModelParams(clipped, bound)
