"""Command-line interface.

Subcommands:
  synth   generate synthetic owner datasets as CSV files
  pca     fit (and optionally apply) a feature-reduction dictionary
  train   execute a single training run and write its trajectory
  sweep   execute an ensemble grid and write percentile/sweep tables
  bounds  evaluate or fit the limiting fitness-gap bound over a sweep table
  report  collaboration-value table on heterogeneous two-cluster data

Most parameters come from a declarative ``key = value`` config file; --seed,
--out, and --mode override the file.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from .bounds import FittedBound, fit_constants, limiting_bound_fitness
from .data import (
    TableSchema,
    apply_pca,
    export_csv,
    fit_pca,
    gen_synthetic,
    ingest_csv,
    save_codes,
)
from .experiments import (
    collaboration_report,
    parse_config_text,
    plan_from_mapping,
    run_ensemble,
    write_collaboration_outputs,
    write_ensemble_outputs,
    write_trajectory_csv,
)
from .model import OwnerDataset
from .oracle import FitnessEvaluator, solve_exact
from .output import write_csv, write_manifest
from .scheduling import SchedulerMode, write_schedule_csv
from .seeding import DATA_STREAM, derive_seed
from .trainer import ProtocolConfig, run


def _load_config(path: str | None) -> dict[str, str]:
    if path is None:
        return {}
    return parse_config_text(Path(path).read_text())


def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="declarative key = value plan file")
    parser.add_argument("--seed", type=int, help="master seed (overrides config)")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument(
        "--mode",
        choices=[m.value for m in SchedulerMode],
        help="owner-selection mode (overrides config)",
    )


def _overrides(args) -> dict:
    out = {}
    if args.seed is not None:
        out["seed"] = args.seed
    if getattr(args, "mode", None):
        out["mode"] = SchedulerMode.parse(args.mode)
    return out


def cmd_synth(args) -> int:
    cfg = _load_config(args.config)
    plan = plan_from_mapping(cfg, **_overrides(args))
    out = Path(args.out)
    sizes = [plan.owner_sizes[0]] * plan.owner_counts[0]
    data_seed = derive_seed(plan.seed, DATA_STREAM, 1, plan.owner_counts[0], plan.owner_sizes[0])
    datasets = gen_synthetic(plan.dim, sum(sizes), sizes, plan.noise_std, data_seed)
    header = [f"x{j + 1}" for j in range(plan.dim)] + ["target"]
    for dataset in datasets:
        rows = (
            list(features) + [target]
            for features, target in zip(dataset.features, dataset.targets)
        )
        write_csv(out / f"owner_{dataset.owner_id}.csv", header, rows)
    write_manifest(out / "manifest.txt", plan.manifest_entries())
    print(f"wrote {len(datasets)} owner datasets to {out}")
    return 0


def cmd_pca(args) -> int:
    cfg = _load_config(args.config)
    schema = TableSchema(
        target=cfg["target"],
        numeric=tuple(s.strip() for s in cfg.get("numeric", "").split(",") if s.strip()),
        categorical=tuple(s.strip() for s in cfg.get("categorical", "").split(",") if s.strip()),
        drop=tuple(s.strip() for s in cfg.get("drop", "").split(",") if s.strip()),
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    table, codes = ingest_csv(args.input, schema)
    k = int(cfg.get("k", 10))
    sample_size = min(int(cfg.get("sample_size", 10_000)), table.n_rows)
    dictionary = fit_pca(table, k, sample_size)
    dictionary.save(out / "pca.json")
    save_codes(codes, out / "codes.json")
    if args.apply:
        scores = apply_pca(dictionary, table)
        header = [f"pc{j + 1}" for j in range(k)] + [table.target_name]
        rows = (list(row) + [t] for row, t in zip(scores, table.target))
        write_csv(out / "transformed.csv", header, rows)
    write_manifest(
        out / "manifest.txt",
        {
            "input": args.input,
            "k": k,
            "sample_size": sample_size,
            "dropped_rows": table.dropped_rows,
            "pca_scores": "raw projections (no variance normalization)",
        },
    )
    print(f"fitted {k} components on the last {sample_size} rows -> {out}")
    return 0


def _load_owner_csvs(data_dir: Path, epsilon: float) -> list[OwnerDataset]:
    paths = sorted(data_dir.glob("owner_*.csv"), key=lambda p: int(p.stem.split("_")[1]))
    if not paths:
        raise FileNotFoundError(f"no owner_*.csv files under {data_dir}")
    datasets = []
    for owner_id, path in enumerate(paths, start=1):
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            next(reader)
            rows = [[float(v) for v in row] for row in reader]
        matrix = np.asarray(rows, dtype=float)
        datasets.append(OwnerDataset(owner_id, matrix[:, :-1], matrix[:, -1], epsilon))
    return datasets


def cmd_train(args) -> int:
    cfg = _load_config(args.config)
    plan = plan_from_mapping(cfg, **_overrides(args))
    out = Path(args.out)
    n_owners = plan.owner_counts[0]
    epsilon = plan.epsilons[0]
    if args.data:
        datasets = [d.with_epsilon(epsilon) for d in _load_owner_csvs(Path(args.data), epsilon)]
    else:
        sizes = [plan.owner_sizes[0]] * n_owners
        data_seed = derive_seed(plan.seed, DATA_STREAM, 1, n_owners, plan.owner_sizes[0])
        datasets = gen_synthetic(plan.dim, sum(sizes), sizes, plan.noise_std, data_seed, epsilon)
    config = ProtocolConfig(
        n_owners=len(datasets),
        horizon=plan.horizon,
        fitness=plan.fitness,
        step_gain=plan.step_gain,
        theta_max=plan.theta_max,
        mode=plan.mode,
        seed=plan.seed,
        snapshot_stride=plan.snapshot_stride,
    )
    solution = solve_exact(datasets, plan.fitness, plan.theta_max)
    state = run(config, datasets)
    psis = (
        FitnessEvaluator(datasets, plan.fitness).fitness_batch(state.trajectory)
        / solution.fitness_star
        - 1.0
    )
    write_trajectory_csv(state, psis, out / "trajectory.csv")
    write_schedule_csv(state.event_log, out / "schedule.csv")
    entries = plan.manifest_entries()
    entries["resolved_step_gain"] = config.step_gain
    entries["fitness_star"] = solution.fitness_star
    write_manifest(out / "manifest.txt", entries)
    print(f"final relative fitness: {float(psis[-1]):.6g} -> {out}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _load_config(args.config)
    plan = plan_from_mapping(cfg, **_overrides(args))
    results = run_ensemble(plan)
    write_ensemble_outputs(plan, results, args.out)
    print(f"swept {len(results)} cells -> {args.out}")
    return 0


def cmd_bounds(args) -> int:
    out = Path(args.out)
    rows = []
    with open(args.sweep_csv, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            rows.append(
                (
                    int(float(row["n"])),
                    float(row["eps"]),
                    int(float(row["N"])),
                    float(row["mean_psi"]),
                )
            )
    if not rows:
        raise ValueError(f"{args.sweep_csv} holds no sweep rows")
    if args.sqrt_coeff is not None or args.linear_coeff is not None:
        fitted = FittedBound(args.sqrt_coeff or 0.0, args.linear_coeff or 0.0)
    else:
        fitted = fit_constants(
            [(n, (eps,) * n_owners, psi) for n, eps, n_owners, psi in rows]
        )
    table = [
        (n, eps, psi, limiting_bound_fitness(n, (eps,) * n_owners, fitted))
        for n, eps, n_owners, psi in rows
    ]
    write_csv(out / "bounds.csv", ["n", "eps", "measured_psi", "bound_psi"], table)
    write_manifest(
        out / "manifest.txt",
        {
            "sweep_csv": args.sweep_csv,
            "sqrt_coeff": fitted.sqrt_coeff,
            "linear_coeff": fitted.linear_coeff,
        },
    )
    print(
        f"bound coefficients: sqrt={fitted.sqrt_coeff!r} linear={fitted.linear_coeff!r} -> {out}"
    )
    return 0


def cmd_report(args) -> int:
    cfg = _load_config(args.config)
    plan = plan_from_mapping(cfg, data_kind="two_cluster", **_overrides(args))
    results = collaboration_report(plan)
    write_collaboration_outputs(plan, results, args.out)
    beneficial = sum(1 for c in results if c.benefit)
    print(f"{beneficial}/{len(results)} cells show a collaboration benefit -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="asyncdp",
        description="Asynchronous differentially-private collaborative training simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate synthetic owner datasets")
    _add_common_flags(p_synth)
    p_synth.set_defaults(func=cmd_synth)

    p_pca = sub.add_parser("pca", help="fit/apply a feature-reduction dictionary")
    p_pca.add_argument("--config", required=True, help="schema config file")
    p_pca.add_argument("--input", required=True, help="input CSV file")
    p_pca.add_argument("--out", required=True, help="output directory")
    p_pca.add_argument("--apply", action="store_true", help="also write transformed.csv")
    p_pca.set_defaults(func=cmd_pca)

    p_train = sub.add_parser("train", help="execute a single training run")
    _add_common_flags(p_train)
    p_train.add_argument("--data", help="directory of owner_*.csv files (default: synthetic)")
    p_train.set_defaults(func=cmd_train)

    p_sweep = sub.add_parser("sweep", help="execute an ensemble grid")
    _add_common_flags(p_sweep)
    p_sweep.set_defaults(func=cmd_sweep)

    p_bounds = sub.add_parser("bounds", help="evaluate/fit the limiting bound")
    p_bounds.add_argument("--sweep-csv", required=True, help="measured sweep table")
    p_bounds.add_argument("--out", required=True, help="output directory")
    p_bounds.add_argument("--sqrt-coeff", type=float, help="fix the sqrt-term coefficient")
    p_bounds.add_argument("--linear-coeff", type=float, help="fix the linear-term coefficient")
    p_bounds.set_defaults(func=cmd_bounds)

    p_report = sub.add_parser("report", help="collaboration-value table")
    _add_common_flags(p_report)
    p_report.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
