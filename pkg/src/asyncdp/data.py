"""Dataset ingestion, preprocessing, and synthetic data generation.

CSV ingestion maps categorical columns to integer codes through a persistable
first-appearance dictionary (code 0 is reserved for categories unseen at fit
time). Feature reduction uses centered principal components computed by
deflated power iteration; scores are raw projections, not variance-normalized.
Synthetic problems draw a ground-truth parameter vector and partition rows
contiguously across owners.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .model import OwnerDataset
from .output import write_csv

__all__ = [
    "IngestError",
    "RankError",
    "TableSchema",
    "RawTable",
    "ingest_csv",
    "export_csv",
    "save_codes",
    "load_codes",
    "PcaDictionary",
    "fit_pca",
    "apply_pca",
    "gen_synthetic",
    "gen_synthetic_with_truth",
    "gen_two_cluster",
]

CategoryCodes = dict[str, dict[str, int]]


class IngestError(ValueError):
    """A CSV file cannot be ingested; the message names the offending row."""


class RankError(ValueError):
    """More principal components requested than the data's rank supports."""


@dataclass(frozen=True)
class TableSchema:
    """Column roles for ingestion.

    ``drop`` lists identifier or irrelevant columns to discard outright.
    Feature order in the output is numeric columns first, then categorical,
    each in declared order.
    """

    target: str
    numeric: tuple[str, ...] = ()
    categorical: tuple[str, ...] = ()
    drop: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "numeric", tuple(self.numeric))
        object.__setattr__(self, "categorical", tuple(self.categorical))
        object.__setattr__(self, "drop", tuple(self.drop))
        if not (self.numeric or self.categorical):
            raise ValueError("schema declares no feature columns")

    @property
    def feature_columns(self) -> tuple[str, ...]:
        return self.numeric + self.categorical


@dataclass
class RawTable:
    """A parsed table: float feature matrix plus the target vector."""

    columns: list[str]
    values: np.ndarray
    target: np.ndarray
    target_name: str
    dropped_rows: int = 0

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]


def ingest_csv(
    path, schema: TableSchema, codes: CategoryCodes | None = None
) -> tuple[RawTable, CategoryCodes]:
    """Parse a CSV file into a numeric table.

    Rows with an empty target are dropped and counted; any other parse problem
    raises :class:`IngestError` naming the file line. When ``codes`` is given
    (apply mode) the categorical dictionaries are frozen and unseen categories
    map to the reserved code 0; otherwise codes are assigned in order of first
    appearance starting at 1.
    """
    path = Path(path)
    fit_mode = codes is None
    working: CategoryCodes = (
        {col: {} for col in schema.categorical}
        if fit_mode
        else {col: dict(codes.get(col, {})) for col in schema.categorical}
    )
    rows: list[list[float]] = []
    targets: list[float] = []
    dropped = 0
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestError(f"{path}: empty file") from None
        needed = (schema.target,) + schema.feature_columns
        missing = [col for col in needed if col not in header]
        if missing:
            raise IngestError(f"{path}: missing declared columns {missing}")
        index = {name: header.index(name) for name in needed}
        for line, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise IngestError(
                    f"{path}: row {line}: expected {len(header)} fields, got {len(row)}"
                )
            raw_target = row[index[schema.target]].strip()
            if raw_target == "":
                dropped += 1
                continue
            try:
                target = float(raw_target)
            except ValueError:
                raise IngestError(
                    f"{path}: row {line}: non-numeric target {raw_target!r}"
                ) from None
            feats: list[float] = []
            try:
                for col in schema.numeric:
                    feats.append(float(row[index[col]].strip()))
            except ValueError:
                raise IngestError(
                    f"{path}: row {line}: non-numeric value in column {col!r}"
                ) from None
            for col in schema.categorical:
                raw = row[index[col]].strip()
                mapping = working[col]
                if raw in mapping:
                    code = mapping[raw]
                elif fit_mode:
                    code = len(mapping) + 1
                    mapping[raw] = code
                else:
                    code = 0
                feats.append(float(code))
            rows.append(feats)
            targets.append(target)
    n_features = len(schema.feature_columns)
    table = RawTable(
        columns=list(schema.feature_columns),
        values=np.asarray(rows, dtype=float).reshape(len(rows), n_features),
        target=np.asarray(targets, dtype=float),
        target_name=schema.target,
        dropped_rows=dropped,
    )
    return table, working


def export_csv(table: RawTable, path) -> None:
    """Write a table back out; numeric values round-trip bit-exactly."""
    header = table.columns + [table.target_name]
    rows = (
        list(feature_row) + [target]
        for feature_row, target in zip(table.values, table.target)
    )
    write_csv(path, header, rows)


def save_codes(codes: CategoryCodes, path) -> None:
    Path(path).write_text(json.dumps(codes, indent=2, sort_keys=True) + "\n")


def load_codes(path) -> CategoryCodes:
    loaded = json.loads(Path(path).read_text())
    return {col: {str(k): int(v) for k, v in mapping.items()} for col, mapping in loaded.items()}


@dataclass
class PcaDictionary:
    """Centered principal components fitted on the tail of a table.

    ``components`` rows are orthonormal; ``eigenvalues`` are the matching
    sample-covariance eigenvalues in nonincreasing order.
    """

    mean: np.ndarray
    components: np.ndarray
    eigenvalues: np.ndarray
    sample_size: int

    @property
    def n_components(self) -> int:
        return self.components.shape[0]

    def save(self, path) -> None:
        payload = {
            "mean": list(self.mean),
            "components": [list(row) for row in self.components],
            "eigenvalues": list(self.eigenvalues),
            "sample_size": self.sample_size,
        }
        Path(path).write_text(json.dumps(payload, indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "PcaDictionary":
        payload = json.loads(Path(path).read_text())
        return cls(
            mean=np.asarray(payload["mean"], dtype=float),
            components=np.asarray(payload["components"], dtype=float),
            eigenvalues=np.asarray(payload["eigenvalues"], dtype=float),
            sample_size=int(payload["sample_size"]),
        )


def _as_matrix(table) -> np.ndarray:
    if isinstance(table, RawTable):
        return table.values
    matrix = np.asarray(table, dtype=float)
    if matrix.ndim != 2:
        raise ValueError("expected a 2-D matrix of feature rows")
    return matrix


def _top_eigenpairs(
    matrix: np.ndarray, k: int, tol: float, seed: int, max_iter: int = 100_000
) -> tuple[np.ndarray, np.ndarray]:
    """Top-k eigenpairs of a symmetric PSD matrix by deflated power iteration."""
    dim = matrix.shape[0]
    rank_floor = max(float(np.trace(matrix)), 1.0) * 1e-12
    rng = np.random.default_rng(seed)
    components = np.zeros((k, dim))
    eigenvalues = np.zeros(k)
    work = matrix.astype(float).copy()
    for j in range(k):
        vec = rng.standard_normal(dim)
        if j:
            vec -= components[:j].T @ (components[:j] @ vec)
        vec /= np.linalg.norm(vec)
        for _ in range(max_iter):
            prod = work @ vec
            if j:
                # Numerical re-orthogonalization against found components.
                prod -= components[:j].T @ (components[:j] @ prod)
            norm = float(np.linalg.norm(prod))
            if norm <= rank_floor:
                raise RankError(f"requested {k} components but the data rank is {j}")
            refreshed = prod / norm
            if float(refreshed @ vec) < 0.0:
                refreshed = -refreshed
            # Converge the vector itself: the deflation step needs accurate
            # components, not just an accurate eigenvalue.
            delta = float(np.max(np.abs(refreshed - vec)))
            vec = refreshed
            if delta <= tol:
                break
        else:
            raise RankError(f"power iteration stalled on component {j + 1}")
        value = float(vec @ (work @ vec))
        if value <= rank_floor:
            raise RankError(f"requested {k} components but the data rank is {j}")
        components[j] = vec
        eigenvalues[j] = value
        work -= value * np.outer(vec, vec)
    return components, eigenvalues


def fit_pca(table, k: int, sample_size: int, seed: int = 0) -> PcaDictionary:
    """Fit the top-``k`` principal components of the last ``sample_size`` rows.

    Centering uses the sample mean; eigenpairs come from deflated power
    iteration on the sample covariance with tolerance 1e-9.
    """
    matrix = _as_matrix(table)
    n_rows, dim = matrix.shape
    if not 2 <= sample_size <= n_rows:
        raise ValueError("sample_size must lie in 2..n_rows")
    if not 1 <= k <= dim:
        raise ValueError("k must lie in 1..dim")
    sample = matrix[-sample_size:]
    mean = sample.mean(axis=0)
    centered = sample - mean
    covariance = centered.T @ centered / (sample_size - 1)
    components, eigenvalues = _top_eigenpairs(covariance, k, tol=1e-9, seed=seed)
    return PcaDictionary(mean, components, eigenvalues, sample_size)


def apply_pca(dictionary: PcaDictionary, table) -> np.ndarray:
    """Project rows onto the fitted components: (rows - mean) @ components.T."""
    matrix = _as_matrix(table)
    if matrix.shape[1] != dictionary.mean.shape[0]:
        raise ValueError(
            f"table has {matrix.shape[1]} columns, dictionary expects {dictionary.mean.shape[0]}"
        )
    return (matrix - dictionary.mean) @ dictionary.components.T


def _partition_owners(
    features: np.ndarray,
    targets: np.ndarray,
    owner_sizes: Sequence[int],
    epsilons,
) -> list[OwnerDataset]:
    """Contiguous partition: owner 1 gets the first block of rows, and so on."""
    n_owners = len(owner_sizes)
    if np.isscalar(epsilons):
        eps_list = [float(epsilons)] * n_owners
    else:
        eps_list = [float(e) for e in epsilons]
        if len(eps_list) != n_owners:
            raise ValueError("need one epsilon per owner")
    datasets = []
    start = 0
    for owner, (size, eps) in enumerate(zip(owner_sizes, eps_list), start=1):
        datasets.append(
            OwnerDataset(owner, features[start : start + size], targets[start : start + size], eps)
        )
        start += size
    return datasets


def gen_synthetic_with_truth(
    dim: int,
    n_total: int,
    owner_sizes: Sequence[int],
    noise_std: float,
    seed,
    epsilons=math.inf,
) -> tuple[list[OwnerDataset], np.ndarray]:
    """Linear-regression problem with a known ground-truth parameter vector.

    The truth is uniform on [-1, 1]^dim, features are standard normal, and
    targets add centered Gaussian noise of the given standard deviation.
    """
    sizes = [int(s) for s in owner_sizes]
    if any(s < 1 for s in sizes):
        raise ValueError("owner sizes must be positive")
    if sum(sizes) != int(n_total):
        raise ValueError("owner sizes must sum to n_total")
    rng = np.random.default_rng(seed)
    truth = rng.uniform(-1.0, 1.0, size=dim)
    features = rng.standard_normal((n_total, dim))
    targets = features @ truth + noise_std * rng.standard_normal(n_total)
    return _partition_owners(features, targets, sizes, epsilons), truth


def gen_synthetic(
    dim: int,
    n_total: int,
    owner_sizes: Sequence[int],
    noise_std: float,
    seed,
    epsilons=math.inf,
) -> list[OwnerDataset]:
    datasets, _ = gen_synthetic_with_truth(
        dim, n_total, owner_sizes, noise_std, seed, epsilons
    )
    return datasets


def gen_two_cluster(
    dim: int,
    owner_sizes: Sequence[int],
    noise_std: float,
    seed,
    epsilons=math.inf,
    solo_owner: int = 1,
) -> list[OwnerDataset]:
    """Heterogeneous problem: one owner's targets follow a different model.

    Owner ``solo_owner`` draws targets from its own ground truth while every
    other owner shares a second one, so a model fitted on the solo owner alone
    is biased on the union. Useful for measuring the value of collaboration.
    """
    sizes = [int(s) for s in owner_sizes]
    if any(s < 1 for s in sizes):
        raise ValueError("owner sizes must be positive")
    if not 1 <= solo_owner <= len(sizes):
        raise ValueError("solo_owner must index one of the owners")
    rng = np.random.default_rng(seed)
    truth_solo = rng.uniform(-1.0, 1.0, size=dim)
    truth_rest = rng.uniform(-1.0, 1.0, size=dim)
    # Drawing owner by owner keeps owner k's records identical across owner
    # counts (same seed), so growing the federation only adds owners.
    feature_blocks = []
    target_blocks = []
    for owner, size in enumerate(sizes, start=1):
        block = rng.standard_normal((size, dim))
        noise = noise_std * rng.standard_normal(size)
        truth = truth_solo if owner == solo_owner else truth_rest
        feature_blocks.append(block)
        target_blocks.append(block @ truth + noise)
    features = np.concatenate(feature_blocks)
    targets = np.concatenate(target_blocks)
    return _partition_owners(features, targets, sizes, epsilons)
